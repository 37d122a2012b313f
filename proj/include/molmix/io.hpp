#pragma once

// Persistence: experiment configs, weight files, training reports and
// alphabet tables.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "molmix/scenarios.hpp"

namespace molmix {

/// A file the command needs (model, config) does not exist.
class MissingArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_text_file(const std::filesystem::path& path);
/// Creates parent directories as needed.
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Serializes every field of the config as indented JSON.
std::string experiment_config_to_json(const ExperimentConfig& config);

/// Reads a JSON config. Fields absent from the text keep the values of the
/// preset named by `scenario_override`, else by the text's "scenario" field,
/// else full-csi. Syntax errors report line and column; field errors report
/// the dotted field path. Both throw ConfigError prefixed with `source`.
ExperimentConfig parse_experiment_config(const std::string& text, const std::string& source,
                                         const std::optional<std::string>& scenario_override = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::optional<std::string>& scenario_override = {});

/// Free-form provenance stored alongside the weights.
struct ModelMetadata {
  std::string scenario;
  std::string tag;
  std::uint64_t sensor_seed = 0;
};

struct LoadedModel {
  EndToEndModel model;
  ModelMetadata metadata;
};

/// Architecture, every parameter in row-major order at full precision,
/// batch-norm running statistics and the creation seed.
std::string model_to_json(const EndToEndModel& model, const ModelMetadata& metadata = {});
LoadedModel model_from_json(const std::string& text, const std::string& source = "weights");

std::string train_report_to_json(const TrainReport& report);

/// Header user,symbol,x1..xS with 1-based users and 0-based symbols.
void write_alphabet_csv(std::ostream& out, const std::vector<AlphabetTable>& alphabets);
std::vector<AlphabetTable> parse_alphabet_csv(std::istream& in);

}  // namespace molmix
