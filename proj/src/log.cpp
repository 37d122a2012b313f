#include "molmix/log.hpp"

#include <atomic>
#include <iostream>

namespace molmix {

namespace {
std::atomic<LogLevel> g_level{LogLevel::kWarning};

void emit(LogLevel level, const char* tag, const std::string& message) {
  if (level < g_level.load()) return;
  std::clog << "[molmix " << tag << "] " << message << '\n';
}
}  // namespace

void set_log_level(LogLevel level) { g_level.store(level); }
LogLevel log_level() { return g_level.load(); }

void log_debug(const std::string& message) { emit(LogLevel::kDebug, "debug", message); }
void log_info(const std::string& message) { emit(LogLevel::kInfo, "info", message); }
void log_warning(const std::string& message) { emit(LogLevel::kWarning, "warn", message); }

}  // namespace molmix
