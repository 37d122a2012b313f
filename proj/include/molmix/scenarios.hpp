#pragma once

// Named experiment presets and the configuration bundle read by the CLI.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "molmix/evaluation.hpp"
#include "molmix/sensors.hpp"
#include "molmix/training.hpp"

namespace molmix {

/// How to obtain the sensor array: generated from a seed, or given explicitly.
struct SensorSpec {
  std::uint64_t seed = 11;
  double z_scale = 1e-5;
  /// Attenuation of the calibration mixture h_ref * x_max * 1.
  double h_ref = 0.01;
  std::optional<Matrix> gains;
  std::optional<Matrix> exponents;

  SensorArray build(const SystemConfig& system) const;
};

struct EvaluationGrids {
  std::vector<double> nu_grid = default_nu_levels();
  std::vector<int> n_list{4, 8, 16};
  std::vector<double> h_grid = default_h_grid();
  std::vector<double> ratio_grid = default_ratio_grid();
  double design_h = 0.02;
  std::size_t scatter_samples = 1000;
  SweepSettings sweep;
};

struct ExperimentConfig {
  std::string scenario = "full-csi";
  /// lambda_2 / lambda_1; multi-user only.
  double ratio = 1.0;
  SystemConfig system;
  SensorSpec sensors;
  TrainConfig train;
  EvaluationGrids evaluation;

  /// Maps sensor outputs to unit order at the decoder input.
  double input_scale() const { return 1.0 / sensors.z_scale; }
  void validate() const;
};

/// full-csi, h-fixed, h-lim, h-full, multi-user.
const std::vector<std::string>& scenario_names();

/// Preset for `scenario`. `n` = 0 keeps the scenario's default alphabet
/// size; `ratio` is the importance ratio lambda_2 / lambda_1 (multi-user).
ExperimentConfig scenario_preset(const std::string& scenario, int n = 0, double ratio = 1.0);

/// Sets every user's alphabet size to n.
void set_alphabet_size(ExperimentConfig& config, int n);
/// Sets the importance factors for a two-user ratio.
void set_importance_ratio(ExperimentConfig& config, double ratio);

/// Identifies one trained model within a scenario: "n4" or "ratio-3".
std::string artifact_tag(const ExperimentConfig& config);

struct TrainedModel {
  std::string scenario;
  std::string tag;
  ExperimentConfig config;
  EndToEndModel model;
  TrainReport report;
};

/// Trains the model described by `config`.
TrainedModel train_scenario(const ExperimentConfig& config);

/// Every model the scenario's sweep needs: one per alphabet size in the
/// n-list, or one per importance ratio for multi-user.
std::vector<TrainedModel> train_scenario_suite(const ExperimentConfig& base);

}  // namespace molmix
