// molmix: train, evaluate and sweep molecule-mixture autoencoders.
//
// Exit codes: 0 success, 1 runtime failure (including a failed gradient
// check), 2 malformed configuration or arguments, 3 missing artifact.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "molmix/evaluation.hpp"
#include "molmix/io.hpp"
#include "molmix/log.hpp"
#include "molmix/scenarios.hpp"

namespace fs = std::filesystem;
using namespace molmix;

namespace {

struct Common {
  std::string config_path;
  std::string scenario;
  std::optional<std::uint64_t> seed;
  int n = 0;
  std::optional<double> ratio;
  std::optional<std::size_t> trials;
  std::string runs = "runs";
  std::string out;
  bool quiet = false;
  bool verbose = false;
};

void add_common(CLI::App* cmd, Common& c, bool with_n = true) {
  cmd->add_option("--config", c.config_path, "Experiment config (JSON); absent fields use the preset");
  cmd->add_option("--scenario", c.scenario, "full-csi, h-fixed, h-lim, h-full or multi-user");
  cmd->add_option("--seed", c.seed, "Master seed for training and evaluation");
  if (with_n) cmd->add_option("--n", c.n, "Alphabet size per user")->check(CLI::Range(2, 1 << 20));
  cmd->add_option("--ratio", c.ratio, "Importance ratio lambda2/lambda1 (multi-user)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--trials", c.trials, "Monte-Carlo trials per evaluation point")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--runs", c.runs, "Root of the run directories")->capture_default_str();
  cmd->add_option("--out", c.out, "Output file (default: inside the run directory)");
  cmd->add_flag("--quiet", c.quiet, "Only print warnings");
  cmd->add_flag("--verbose", c.verbose, "Print debug messages");
}

ExperimentConfig resolve(const Common& c, const std::string& default_scenario) {
  std::optional<std::string> scenario;
  if (!c.scenario.empty()) scenario = c.scenario;
  ExperimentConfig cfg;
  if (!c.config_path.empty()) {
    cfg = load_experiment_config(c.config_path, scenario);
  } else {
    cfg = scenario_preset(scenario.value_or(default_scenario), 0, c.ratio.value_or(1.0));
  }
  if (c.n > 0) {
    set_alphabet_size(cfg, c.n);
    cfg.evaluation.n_list = {c.n};
  }
  if (c.ratio) {
    set_importance_ratio(cfg, *c.ratio);
    cfg.evaluation.ratio_grid = {*c.ratio};
  }
  if (c.seed) {
    cfg.train.seed = *c.seed;
    cfg.evaluation.sweep.seed = *c.seed;
  }
  if (c.trials) cfg.evaluation.sweep.trials = *c.trials;
  cfg.validate();
  return cfg;
}

fs::path run_dir(const Common& c, const std::string& scenario, std::uint64_t seed) {
  return fs::path(c.runs) / scenario / std::to_string(seed);
}

fs::path output_path(const Common& c, const fs::path& dir, const std::string& name) {
  return c.out.empty() ? dir / name : fs::path(c.out);
}

void apply_verbosity(const Common& c) {
  if (c.quiet) set_log_level(LogLevel::kWarning);
  if (c.verbose) set_log_level(LogLevel::kDebug);
}

std::string csv_text(const std::vector<SerRecord>& records) {
  std::ostringstream s;
  write_csv(s, records);
  return s.str();
}

void check_model_fits(const EndToEndModel& m, const SystemConfig& s, const std::string& path) {
  if (m.users() != s.users || m.decoder.sensors() != s.sensors)
    throw ConfigError(path + ": model dimensions do not match the configured system");
  for (const auto& a : m.alphabets())
    if (a.molecules() != s.molecules)
      throw ConfigError(path + ": model molecule count does not match the configured system");
}

/// Loads runs/<scenario>/<seed>/model-<tag>.json for `cfg`.
EndToEndModel load_model(const Common& c, const ExperimentConfig& cfg) {
  const fs::path path = run_dir(c, cfg.scenario, cfg.train.seed) /
                        ("model-" + artifact_tag(cfg) + ".json");
  if (!fs::exists(path))
    throw MissingArtifactError("missing model for scenario " + cfg.scenario + " (" +
                               artifact_tag(cfg) + "): " + path.string() +
                               "; run 'molmix train' first");
  EndToEndModel m = model_from_json(read_text_file(path), path.string()).model;
  check_model_fits(m, cfg.system, path.string());
  return m;
}

// --- subcommands ------------------------------------------------------------

int cmd_init_config(const Common& c) {
  const ExperimentConfig cfg = resolve(c, "full-csi");
  const std::string text = experiment_config_to_json(cfg);
  if (c.out.empty())
    std::cout << text;
  else
    write_text_file(c.out, text);
  return 0;
}

int cmd_train(const Common& c, bool all) {
  const ExperimentConfig cfg = resolve(c, "full-csi");
  const std::vector<TrainedModel> models =
      all ? train_scenario_suite(cfg) : std::vector<TrainedModel>{train_scenario(cfg)};
  const fs::path dir = run_dir(c, cfg.scenario, cfg.train.seed);
  for (const auto& t : models) {
    write_text_file(dir / ("config-" + t.tag + ".json"), experiment_config_to_json(t.config));
    write_text_file(dir / ("model-" + t.tag + ".json"),
                    model_to_json(t.model, {t.scenario, t.tag, t.config.sensors.seed}));
    write_text_file(dir / ("report-" + t.tag + ".json"), train_report_to_json(t.report));
    std::ostringstream alphabet;
    write_alphabet_csv(alphabet, t.model.alphabets());
    write_text_file(dir / ("alphabet-" + t.tag + ".csv"), alphabet.str());
    std::printf("%s %s: %zu steps, final loss %.6g, %.1f s -> %s\n", t.scenario.c_str(),
                t.tag.c_str(), t.report.steps, t.report.epoch_loss.back(), t.report.wall_seconds,
                (dir / ("model-" + t.tag + ".json")).string().c_str());
  }
  return 0;
}

int cmd_evaluate(const Common& c, double nu, const std::vector<double>& h) {
  const ExperimentConfig cfg = resolve(c, "full-csi");
  const EndToEndModel model = load_model(c, cfg);
  const SensorArray sensors = cfg.sensors.build(cfg.system);
  EvalPoint point{nu, std::nullopt};
  if (h.size() == 1) point.h = HRange{h[0], h[0]};
  if (h.size() == 2) point.h = HRange{h[0], h[1]};
  if (h.size() > 2) throw ConfigError("--attenuation takes one value or a range lo hi");
  if (point.h) point.h->validate();
  SerRecord r = estimate_ser(model.alphabets(), DecoderDetector(model), cfg.system, sensors, point,
                             cfg.evaluation.sweep.trials, cfg.evaluation.sweep.seed, 0);
  r.scheme = cfg.system.users == 1 ? "ae-n" + std::to_string(cfg.system.alphabet_sizes[0]) : "ae";
  r.scenario = cfg.scenario;
  r.lambda_ratio = cfg.scenario == "multi-user" ? cfg.ratio : 1.0;
  const fs::path dir = run_dir(c, cfg.scenario, cfg.train.seed);
  const fs::path out = output_path(c, dir, "evaluate-" + artifact_tag(cfg) + ".csv");
  write_text_file(out, csv_text({r}));
  std::printf("sser %.6g (+/- %.2g) over %zu trials -> %s\n", r.sser, r.ci95, r.trials,
              out.string().c_str());
  return 0;
}

int cmd_sweep_snr(const Common& c) {
  ExperimentConfig cfg = resolve(c, "full-csi");
  if (cfg.scenario != "full-csi") throw ConfigError("sweep-snr needs the full-csi scenario");
  const SensorArray sensors = cfg.sensors.build(cfg.system);
  std::vector<EndToEndModel> models;
  models.reserve(cfg.evaluation.n_list.size());
  std::map<int, const EndToEndModel*> by_n;
  for (int n : cfg.evaluation.n_list) {
    ExperimentConfig one = cfg;
    set_alphabet_size(one, n);
    models.push_back(load_model(c, one));
    by_n[n] = &models.back();
  }
  const auto records =
      sweep_snr(cfg.system, sensors, by_n, cfg.evaluation.nu_grid, cfg.evaluation.sweep);
  const fs::path out = output_path(c, run_dir(c, cfg.scenario, cfg.train.seed), "sweep-snr.csv");
  write_text_file(out, csv_text(records));

  // Plot-ready companion with the x-axis as 1/nu.
  std::ostringstream plot;
  plot << "scheme,inv_nu,ser,ci95\n";
  for (const auto& r : records)
    plot << r.scheme << ',' << format_double(1.0 / r.nu) << ',' << format_double(r.sser) << ','
         << format_double(r.ci95) << '\n';
  fs::path plot_path = out;
  plot_path.replace_extension(".inv-nu.csv");
  write_text_file(plot_path, plot.str());
  std::printf("%zu records -> %s\n", records.size(), out.string().c_str());
  return 0;
}

int cmd_sweep_h(const Common& c) {
  ExperimentConfig cfg = resolve(c, "h-fixed");
  const SensorArray sensors = cfg.sensors.build(cfg.system);
  std::vector<EndToEndModel> storage;
  storage.reserve(3 * cfg.evaluation.n_list.size());
  std::map<int, HSweepModels> models;
  for (int n : cfg.evaluation.n_list) {
    HSweepModels set;
    for (const char* scenario : {"h-fixed", "h-lim", "h-full"}) {
      ExperimentConfig one = cfg;
      one.scenario = scenario;
      set_alphabet_size(one, n);
      storage.push_back(load_model(c, one));
      const EndToEndModel* m = &storage.back();
      if (std::string(scenario) == "h-fixed") set.fixed = m;
      if (std::string(scenario) == "h-lim") set.limited = m;
      if (std::string(scenario) == "h-full") set.full = m;
    }
    models[n] = set;
  }
  const auto records = sweep_h(cfg.system, sensors, models, cfg.evaluation.h_grid,
                               cfg.evaluation.design_h, cfg.evaluation.sweep);
  const fs::path out = output_path(c, run_dir(c, cfg.scenario, cfg.train.seed), "sweep-h.csv");
  write_text_file(out, csv_text(records));
  std::printf("%zu records -> %s\n", records.size(), out.string().c_str());
  return 0;
}

int cmd_sweep_importance(const Common& c) {
  ExperimentConfig cfg = resolve(c, "multi-user");
  if (cfg.scenario != "multi-user") throw ConfigError("sweep-importance needs the multi-user scenario");
  const SensorArray sensors = cfg.sensors.build(cfg.system);
  std::vector<EndToEndModel> storage;
  storage.reserve(cfg.evaluation.ratio_grid.size());
  std::map<double, const EndToEndModel*> models;
  for (double ratio : cfg.evaluation.ratio_grid) {
    ExperimentConfig one = cfg;
    set_importance_ratio(one, ratio);
    storage.push_back(load_model(c, one));
    models[ratio] = &storage.back();
  }
  TrainConfig baseline = cfg.train;
  baseline.h_range.reset();
  const auto records = sweep_importance(cfg.system, sensors, models, cfg.evaluation.ratio_grid,
                                        baseline, cfg.input_scale(), cfg.evaluation.sweep);
  const fs::path out =
      output_path(c, run_dir(c, cfg.scenario, cfg.train.seed), "sweep-importance.csv");
  write_text_file(out, csv_text(records));
  std::printf("%zu records -> %s\n", records.size(), out.string().c_str());
  return 0;
}

int cmd_export_scatter(const Common& c, std::size_t samples) {
  ExperimentConfig cfg = resolve(c, "h-full");
  const EndToEndModel model = load_model(c, cfg);
  if (model.users() != 1) throw ConfigError("export-scatter needs a single-user model");
  const SensorArray sensors = cfg.sensors.build(cfg.system);
  SystemConfig system = cfg.system;
  system.set_nu(1.0);
  const ScatterData data =
      export_scatter(model.alphabets().front(), system, sensors, default_scatter_conditions(),
                     samples > 0 ? samples : cfg.evaluation.scatter_samples,
                     cfg.evaluation.sweep.seed);
  const fs::path dir = run_dir(c, cfg.scenario, cfg.train.seed);
  fs::path points = output_path(c, dir, "scatter-" + artifact_tag(cfg) + ".csv");
  fs::path ellipses = points;
  ellipses.replace_extension(".ellipses.csv");
  std::ostringstream p, e;
  write_scatter_points(p, data);
  write_scatter_ellipses(e, data);
  write_text_file(points, p.str());
  write_text_file(ellipses, e.str());
  std::printf("%zu points, %zu ellipses -> %s\n", data.points.size(), data.ellipses.size(),
              points.string().c_str());
  return 0;
}

int cmd_export_alphabet(const Common& c, const std::string& scheme,
                        const std::vector<std::size_t>& molecules) {
  ExperimentConfig cfg = resolve(c, "full-csi");
  std::vector<AlphabetTable> tables;
  std::string tag = artifact_tag(cfg);
  if (scheme == "ae") {
    tables = load_model(c, cfg).alphabets();
  } else if (scheme == "mda") {
    if (cfg.system.users != 1) throw ConfigError("mda alphabets are single-user");
    const SensorArray sensors = cfg.sensors.build(cfg.system);
    const Matrix grid = candidate_grid(cfg.system.molecules, cfg.system.x_max,
                                       cfg.evaluation.sweep.grid_levels);
    tables.push_back(mda_build(grid, cfg.system.alphabet_sizes[0], cfg.system, sensors));
  } else if (scheme == "csk" || scheme == "gmosk") {
    const std::size_t per_user = scheme == "csk" ? 1 : 2;
    std::vector<std::size_t> m = molecules;
    if (m.empty())
      for (std::size_t i = 0; i < per_user * cfg.system.users; ++i) m.push_back(i);
    if (m.size() != per_user * cfg.system.users)
      throw ConfigError("--molecules needs " + std::to_string(per_user * cfg.system.users) +
                        " indices for " + scheme);
    std::vector<FixedAlphabet> alphabets;
    for (std::size_t i = 0; i < cfg.system.users; ++i)
      alphabets.push_back(scheme == "csk"
                              ? csk_alphabet(cfg.system.molecules, cfg.system.x_max, m[i])
                              : gmosk_alphabet(cfg.system.molecules, cfg.system.x_max, m[2 * i],
                                               m[2 * i + 1]));
    if (!molecules_disjoint(alphabets)) throw ConfigError("users must use disjoint molecules");
    for (auto& a : alphabets) tables.push_back(a.table);
    tag = "users-" + std::to_string(cfg.system.users);
  } else {
    throw ConfigError("unknown scheme '" + scheme + "' (expected ae, mda, csk or gmosk)");
  }
  std::ostringstream s;
  write_alphabet_csv(s, tables);
  const fs::path out =
      output_path(c, run_dir(c, cfg.scenario, cfg.train.seed), "alphabet-" + scheme + "-" + tag + ".csv");
  write_text_file(out, s.str());
  std::printf("%zu alphabet(s) -> %s\n", tables.size(), out.string().c_str());
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, int count) {
  double worst = 0.0, worst_fraction = 1.0;
  std::size_t coordinates = 0, straddles = 0;
  for (int i = 0; i < count; ++i) {
    const GradCheckResult r = gradcheck_system(seed + static_cast<std::uint64_t>(i));
    worst = std::max(worst, r.max_relative_error);
    worst_fraction = std::min(worst_fraction, r.fraction_below_tight);
    coordinates += r.coordinates;
    straddles += r.kink_straddles;
    std::printf("seed %llu: max relative error %.3e, %.4f below 1e-4, %zu coordinates (%zu skipped at kinks)\n",
                static_cast<unsigned long long>(seed + static_cast<std::uint64_t>(i)),
                r.max_relative_error, r.fraction_below_tight, r.coordinates, r.kink_straddles);
  }
  std::printf("max relative error %.3e over %zu coordinates\n", worst, coordinates);
  if (worst > 1e-2 || worst_fraction < 0.99) {
    std::fprintf(stderr, "gradcheck failed\n");
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Molecule-mixture communication autoencoders: training, evaluation, sweeps"};
  app.require_subcommand(1);
  Common common;

  auto* init = app.add_subcommand("init-config", "Write a scenario preset as a JSON config");
  add_common(init, common);

  bool all = false;
  auto* train_cmd = app.add_subcommand("train", "Train an autoencoder for a scenario");
  add_common(train_cmd, common);
  train_cmd->add_flag("--all", all, "Train every model of the scenario's sweep");

  double nu = 1.0;
  std::vector<double> h;
  auto* evaluate = app.add_subcommand("evaluate", "Estimate the SER of a trained model");
  add_common(evaluate, common);
  evaluate->add_option("--nu", nu, "Noise multiplier")->check(CLI::NonNegativeNumber);
  evaluate->add_option("--attenuation", h, "Fixed attenuation, or a range lo hi drawn per symbol")
      ->expected(1, 2);

  auto* snr = app.add_subcommand("sweep-snr", "SER against 1/nu for AE and MDA+AML");
  add_common(snr, common);
  auto* hs = app.add_subcommand("sweep-h", "SER against a fixed attenuation h");
  add_common(hs, common);
  auto* imp = app.add_subcommand("sweep-importance", "Per-user SER against lambda2/lambda1");
  add_common(imp, common, false);

  std::size_t samples = 0;
  auto* scatter = app.add_subcommand("export-scatter", "Sensor-output scatter and 95% ellipses");
  add_common(scatter, common);
  scatter->add_option("--samples", samples, "Draws per symbol and condition");

  std::string scheme = "ae";
  std::vector<std::size_t> molecules;
  auto* alphabet = app.add_subcommand("export-alphabet", "Write a symbol-to-mixture table");
  add_common(alphabet, common);
  alphabet->add_option("--scheme", scheme, "ae, mda, csk or gmosk")->capture_default_str();
  alphabet->add_option("--molecules", molecules, "Molecule indices per user (csk: 1, gmosk: 2)");

  std::uint64_t gc_seed = 1;
  int gc_count = 1;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full training graph");
  gc->add_option("--seed", gc_seed, "First seed")->capture_default_str();
  gc->add_option("--count", gc_count, "Number of consecutive seeds")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    apply_verbosity(common);
    if (*init) return cmd_init_config(common);
    if (*train_cmd) return cmd_train(common, all);
    if (*evaluate) return cmd_evaluate(common, nu, h);
    if (*snr) return cmd_sweep_snr(common);
    if (*hs) return cmd_sweep_h(common);
    if (*imp) return cmd_sweep_importance(common);
    if (*scatter) return cmd_export_scatter(common, samples);
    if (*alphabet) return cmd_export_alphabet(common, scheme, molecules);
    if (*gc) return cmd_gradcheck(gc_seed, gc_count);
  } catch (const MissingArtifactError& e) {
    std::fprintf(stderr, "molmix: %s\n", e.what());
    return 3;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "molmix: configuration error: %s\n", e.what());
    return 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "molmix: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "molmix: %s\n", e.what());
    return 1;
  }
  return 0;
}
