#pragma once

#include <string>

namespace molmix {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarning = 2, kSilent = 3 };

void set_log_level(LogLevel level);
LogLevel log_level();

void log_debug(const std::string& message);
void log_info(const std::string& message);
void log_warning(const std::string& message);

}  // namespace molmix
