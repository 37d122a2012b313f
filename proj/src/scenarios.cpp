#include "molmix/scenarios.hpp"

#include <algorithm>

#include "molmix/log.hpp"

namespace molmix {

SensorArray SensorSpec::build(const SystemConfig& system) const {
  if (gains.has_value() != exponents.has_value())
    throw ConfigError("sensors: gains and exponents must be given together");
  if (gains) {
    if (gains->rows() != system.sensors || gains->cols() != system.molecules ||
        !gains->same_shape(*exponents))
      throw ConfigError("sensors: explicit coefficients must be R x S = " +
                        std::to_string(system.sensors) + " x " + std::to_string(system.molecules));
    return SensorArray(*gains, *exponents, seed, z_scale);
  }
  return generate_array(system.molecules, system.sensors, seed, z_scale, h_ref, system.x_max);
}

void ExperimentConfig::validate() const {
  system.validate();
  train.validate(system.users);
  if (!(sensors.z_scale > 0.0)) throw ConfigError("sensors: z_scale must be positive");
  if (!(sensors.h_ref > 0.0)) throw ConfigError("sensors: h_ref must be positive");
  if (evaluation.sweep.trials < 1) throw ConfigError("evaluation: trials must be >= 1");
  if (evaluation.sweep.aml_samples < 2) throw ConfigError("evaluation: aml_samples must be >= 2");
  if (evaluation.sweep.grid_levels < 2) throw ConfigError("evaluation: grid_levels must be >= 2");
  for (int n : evaluation.n_list)
    if (n < 2) throw ConfigError("evaluation: alphabet sizes in n_list must be >= 2");
  for (double h : evaluation.h_grid)
    if (!(h > 0.0)) throw ConfigError("evaluation: h_grid entries must be positive");
  for (double r : evaluation.ratio_grid)
    if (!(r > 0.0)) throw ConfigError("evaluation: ratio_grid entries must be positive");
  for (double nu : evaluation.nu_grid)
    if (!(nu >= 0.0)) throw ConfigError("evaluation: nu_grid entries must be >= 0");
}

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"full-csi", "h-fixed", "h-lim", "h-full",
                                              "multi-user"};
  return names;
}

void set_alphabet_size(ExperimentConfig& config, int n) {
  config.system.alphabet_sizes.assign(config.system.users, n);
}

void set_importance_ratio(ExperimentConfig& config, double ratio) {
  if (config.system.users != 2) throw UsageError("an importance ratio needs two users");
  config.train.importance = importance_for_ratio(ratio);
  config.ratio = ratio;
}

ExperimentConfig scenario_preset(const std::string& scenario, int n, double ratio) {
  ExperimentConfig c;
  c.scenario = scenario;
  if (scenario == "full-csi") {
    set_alphabet_size(c, n > 0 ? n : 4);
  } else if (scenario == "h-fixed" || scenario == "h-lim" || scenario == "h-full") {
    c.system.channel = ChannelMatrixSet::uniform(1, c.system.molecules, 0.02);
    c.sensors.h_ref = 0.02;
    c.evaluation.n_list = {6, 12};
    set_alphabet_size(c, n > 0 ? n : 6);
    if (scenario == "h-lim") c.train.h_range = HRange{0.01, 0.03};
    if (scenario == "h-full") c.train.h_range = HRange{0.005, 0.05};
  } else if (scenario == "multi-user") {
    SystemConfig& s = c.system;
    s.users = 2;
    s.molecules = 4;
    s.sensors = 3;
    s.x_max = 1.5e4;
    s.channel = ChannelMatrixSet::uniform(2, 4, 0.01);
    s.tx_noise = NoiseSpec::isotropic(4, 0.0, 1e6);
    s.channel_noise = NoiseSpec::isotropic(4, 10.0, 10.0);
    s.rx_noise = NoiseSpec::isotropic(3, 0.0, 1e-13);
    c.evaluation.n_list = {4};
    set_alphabet_size(c, n > 0 ? n : 4);
    set_importance_ratio(c, ratio);
  } else {
    std::string known;
    for (const auto& name : scenario_names()) known += (known.empty() ? "" : ", ") + name;
    throw UsageError("unknown scenario '" + scenario + "' (expected one of: " + known + ")");
  }
  return c;
}

std::string artifact_tag(const ExperimentConfig& config) {
  if (config.scenario == "multi-user") {
    return "ratio-" + format_double(config.ratio);
  }
  return "n" + std::to_string(config.system.alphabet_sizes.front());
}

TrainedModel train_scenario(const ExperimentConfig& config) {
  config.validate();
  TrainedModel out;
  out.scenario = config.scenario;
  out.tag = artifact_tag(config);
  out.config = config;
  const SensorArray sensors = config.sensors.build(config.system);
  out.model = make_autoencoder(config.system, config.input_scale(), config.train.seed);
  log_info("training " + config.scenario + " " + out.tag);
  out.report = train(out.model, config.train, config.system, sensors);
  return out;
}

std::vector<TrainedModel> train_scenario_suite(const ExperimentConfig& base) {
  std::vector<TrainedModel> out;
  if (base.scenario == "multi-user") {
    for (double ratio : base.evaluation.ratio_grid) {
      ExperimentConfig c = base;
      set_importance_ratio(c, ratio);
      out.push_back(train_scenario(c));
    }
  } else {
    for (int n : base.evaluation.n_list) {
      ExperimentConfig c = base;
      set_alphabet_size(c, n);
      out.push_back(train_scenario(c));
    }
  }
  return out;
}

}  // namespace molmix
