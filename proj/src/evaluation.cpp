#include "molmix/evaluation.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <tuple>

#include "molmix/log.hpp"

namespace molmix {

double wilson_half_width(std::size_t errors, std::size_t trials, double z) {
  if (trials == 0) return 1.0;
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(errors) / n;
  const double z2 = z * z;
  return z / (1.0 + z2 / n) * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
}

bool record_less(const SerRecord& a, const SerRecord& b) {
  return std::tie(a.scenario, a.scheme, a.nu, a.h_lo, a.h_hi, a.lambda_ratio) <
         std::tie(b.scenario, b.scheme, b.nu, b.h_lo, b.h_hi, b.lambda_ratio);
}

void sort_records(std::vector<SerRecord>& records) {
  std::stable_sort(records.begin(), records.end(), record_less);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

void check_label(const std::string& s) {
  if (s.find_first_of(",\n\r\"") != std::string::npos)
    throw UsageError("csv label contains a separator: " + s);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
T parse_number(const std::string& text, std::size_t line, const char* column) {
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ConfigError("csv line " + std::to_string(line) + ": bad " + column + " '" + text + "'");
  return value;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  Rng rng = make_stream(seed, tag);
  return rng();
}

std::uint64_t task_stream(std::uint64_t experiment, std::uint64_t group, std::uint64_t point) {
  return (experiment << 40) | (group << 20) | point;
}

void label(SerRecord& r, std::string scheme, std::string scenario, double ratio) {
  r.scheme = std::move(scheme);
  r.scenario = std::move(scenario);
  r.lambda_ratio = ratio;
}

std::string sized(const std::string& scheme, int n) { return scheme + "-n" + std::to_string(n); }

}  // namespace

void write_csv(std::ostream& out, const std::vector<SerRecord>& records) {
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    check_label(r.scheme);
    check_label(r.scenario);
    if (r.ser.size() != r.ser_ci95.size())
      throw UsageError("record " + r.scheme + ": per-user SER and interval counts differ");
    const std::string prefix = r.scheme + ',' + r.scenario + ',' + format_double(r.nu) + ',' +
                               format_double(r.h_lo) + ',' + format_double(r.h_hi) + ',' +
                               format_double(r.lambda_ratio) + ',';
    const std::string suffix =
        format_double(r.sser) + ',' + std::to_string(r.trials) + ',';
    for (std::size_t i = 0; i < r.ser.size(); ++i)
      out << prefix << i + 1 << ',' << format_double(r.ser[i]) << ',' << suffix
          << format_double(r.ser_ci95[i]) << ',' << r.seed << '\n';
    out << prefix << 0 << ',' << format_double(r.sser) << ',' << suffix << format_double(r.ci95)
        << ',' << r.seed << '\n';
  }
}

std::vector<SerRecord> parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw ConfigError("csv line 1: expected header '" + std::string(kCsvHeader) + "'");
  std::vector<SerRecord> out;
  SerRecord current;
  bool open = false;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() != 12)
      throw ConfigError("csv line " + std::to_string(lineno) + ": expected 12 columns, got " +
                        std::to_string(f.size()));
    const int user = parse_number<int>(f[6], lineno, "user");
    if (!open) {
      current = SerRecord{};
      current.scheme = f[0];
      current.scenario = f[1];
      current.nu = parse_number<double>(f[2], lineno, "nu");
      current.h_lo = parse_number<double>(f[3], lineno, "h_lo");
      current.h_hi = parse_number<double>(f[4], lineno, "h_hi");
      current.lambda_ratio = parse_number<double>(f[5], lineno, "lambda_ratio");
      current.sser = parse_number<double>(f[8], lineno, "sser");
      current.trials = parse_number<std::size_t>(f[9], lineno, "trials");
      current.seed = parse_number<std::uint64_t>(f[11], lineno, "seed");
      open = true;
    } else if (f[0] != current.scheme || f[1] != current.scenario) {
      throw ConfigError("csv line " + std::to_string(lineno) +
                        ": record interrupted before its aggregate row");
    }
    const double ser = parse_number<double>(f[7], lineno, "ser");
    const double ci = parse_number<double>(f[10], lineno, "ci95");
    if (user == 0) {
      current.ci95 = ci;
      out.push_back(std::move(current));
      open = false;
    } else {
      if (user != static_cast<int>(current.ser.size()) + 1)
        throw ConfigError("csv line " + std::to_string(lineno) + ": users out of order");
      current.ser.push_back(ser);
      current.ser_ci95.push_back(ci);
    }
  }
  if (open) throw ConfigError("csv: last record has no aggregate row");
  return out;
}

SerRecord estimate_ser(const std::vector<AlphabetTable>& alphabets, const Detector& detector,
                       SystemConfig system, const SensorModel& sensors, const EvalPoint& point,
                       std::size_t trials, std::uint64_t seed, std::uint64_t stream) {
  if (alphabets.size() != system.users || detector.users() != system.users)
    throw ConfigError("estimate_ser: alphabets, detector and system disagree on the user count");
  if (trials == 0) throw ConfigError("estimate_ser: need at least one trial");
  system.alphabet_sizes.clear();
  for (const auto& a : alphabets) system.alphabet_sizes.push_back(a.size());
  system.set_nu(point.nu);

  Rng rng = make_stream(seed, stream);
  std::vector<std::size_t> errors(system.users, 0);
  for (std::size_t done = 0; done < trials;) {
    const std::size_t k = std::min(kEvalBatch, trials - done);
    const auto symbols = draw_symbols(system.alphabet_sizes, k, rng);
    const LinkDraw draw = draw_link(system, k, point.h, rng);
    std::vector<Matrix> xbar;
    for (std::size_t i = 0; i < system.users; ++i) xbar.push_back(alphabets[i].lookup(symbols[i]));
    const auto decided = detector.detect(simulate_batch(xbar, sensors, draw));
    for (std::size_t i = 0; i < system.users; ++i)
      for (std::size_t j = 0; j < k; ++j) errors[i] += decided[i][j] != symbols[i][j];
    done += k;
  }

  SerRecord r;
  r.nu = point.nu;
  if (point.h) {
    r.h_lo = point.h->lo;
    r.h_hi = point.h->hi;
  } else {
    r.h_lo = INFINITY;
    r.h_hi = -INFINITY;
    for (const auto& d : system.channel.diagonals)
      for (double h : d) {
        r.h_lo = std::min(r.h_lo, h);
        r.h_hi = std::max(r.h_hi, h);
      }
  }
  r.trials = trials;
  r.seed = seed;
  std::size_t pooled = 0;
  for (std::size_t i = 0; i < system.users; ++i) {
    r.ser.push_back(static_cast<double>(errors[i]) / static_cast<double>(trials));
    r.ser_ci95.push_back(wilson_half_width(errors[i], trials));
    r.sser += r.ser.back();
    pooled += errors[i];
  }
  r.sser /= static_cast<double>(system.users);
  r.ci95 = wilson_half_width(pooled, trials * system.users);
  return r;
}

std::vector<SerRecord> sweep_snr(const SystemConfig& system, const SensorModel& sensors,
                                 const std::map<int, const EndToEndModel*>& models,
                                 const std::vector<double>& nu_grid,
                                 const SweepSettings& settings) {
  if (system.users != 1) throw UsageError("sweep_snr: single-user systems only");
  std::vector<SerRecord> out;
  const Matrix grid = candidate_grid(system.molecules, system.x_max, settings.grid_levels);
  for (const auto& [n, model] : models) {
    if (!model) throw UsageError("sweep_snr: missing model for full-csi with N = " + std::to_string(n));
    SystemConfig sys = system;
    sys.alphabet_sizes = {n};
    const auto ae_alphabets = model->alphabets();
    const DecoderDetector ae(*model);
    const AlphabetTable mda = mda_build(grid, n, sys, sensors);
    for (std::size_t l = 0; l < nu_grid.size(); ++l) {
      const double nu = nu_grid[l];
      const std::uint64_t stream = task_stream(1, static_cast<std::uint64_t>(n), l);
      log_info("sweep-snr N=" + std::to_string(n) + " nu=" + format_double(nu));

      SerRecord r = estimate_ser(ae_alphabets, ae, sys, sensors, {nu, std::nullopt},
                                 settings.trials, settings.seed, stream);
      label(r, sized("ae", n), "full-csi", 1.0);
      out.push_back(std::move(r));

      SystemConfig at_nu = sys;
      at_nu.set_nu(nu);
      const AmlDetector aml(aml_fit({mda}, at_nu, sensors, settings.aml_samples,
                                    derive_seed(settings.seed, stream), std::nullopt));
      SerRecord b = estimate_ser({mda}, aml, sys, sensors, {nu, std::nullopt}, settings.trials,
                                 settings.seed, stream);
      label(b, sized("mda-aml", n), "full-csi", 1.0);
      out.push_back(std::move(b));
    }
  }
  sort_records(out);
  return out;
}

std::vector<SerRecord> sweep_h(const SystemConfig& system, const SensorModel& sensors,
                               const std::map<int, HSweepModels>& models,
                               const std::vector<double>& h_grid, double design_h,
                               const SweepSettings& settings) {
  if (system.users != 1) throw UsageError("sweep_h: single-user systems only");
  std::vector<SerRecord> out;
  const Matrix grid = candidate_grid(system.molecules, system.x_max, settings.grid_levels);
  for (const auto& [n, set] : models) {
    const std::pair<const char*, const EndToEndModel*> aes[] = {
        {"h-fixed", set.fixed}, {"h-lim", set.limited}, {"h-full", set.full}};
    for (const auto& [scenario, model] : aes)
      if (!model)
        throw UsageError("sweep_h: missing model for " + std::string(scenario) +
                         " with N = " + std::to_string(n));

    SystemConfig design = system;
    design.alphabet_sizes = {n};
    design.channel = ChannelMatrixSet::uniform(1, system.molecules, design_h);
    design.set_nu(1.0);
    const AlphabetTable mda = mda_build(grid, n, design, sensors);
    const AmlDetector aml(aml_fit({mda}, design, sensors, settings.aml_samples,
                                  derive_seed(settings.seed, task_stream(2, n, 0xfffff)),
                                  std::nullopt));

    for (std::size_t g = 0; g < h_grid.size(); ++g) {
      const EvalPoint point{1.0, HRange{h_grid[g], h_grid[g]}};
      const std::uint64_t stream = task_stream(2, static_cast<std::uint64_t>(n), g);
      log_info("sweep-h N=" + std::to_string(n) + " h=" + format_double(h_grid[g]));
      for (const auto& [scenario, model] : aes) {
        SerRecord r = estimate_ser(model->alphabets(), DecoderDetector(*model), design, sensors,
                                   point, settings.trials, settings.seed, stream);
        label(r, sized("ae", n), scenario, 1.0);
        out.push_back(std::move(r));
      }
      SerRecord b =
          estimate_ser({mda}, aml, design, sensors, point, settings.trials, settings.seed, stream);
      label(b, sized("mda-aml", n), "h-fixed", 1.0);
      out.push_back(std::move(b));
    }
  }
  sort_records(out);
  return out;
}

std::vector<double> importance_for_ratio(double ratio) {
  if (!(ratio > 0.0) || !std::isfinite(ratio))
    throw ConfigError("importance ratio must be positive and finite");
  return {2.0 / (1.0 + ratio), 2.0 * ratio / (1.0 + ratio)};
}

std::vector<double> default_h_grid() {
  std::vector<double> out;
  for (int i = 1; i <= 10; ++i) out.push_back(0.005 * i);
  return out;
}

std::vector<double> default_ratio_grid() { return {0.1, 1.0 / 3.0, 1.0, 3.0, 10.0}; }

namespace {

std::vector<std::vector<FixedAlphabet>> baseline_candidates(const std::string& scheme,
                                                            const SystemConfig& system) {
  std::vector<std::vector<FixedAlphabet>> out;
  if (scheme == "csk") {
    for (const auto& [a, b] : two_user_single_assignments(system.molecules))
      out.push_back({csk_alphabet(system.molecules, system.x_max, a),
                     csk_alphabet(system.molecules, system.x_max, b)});
  } else if (scheme == "gmosk") {
    for (const auto& [p, q] : two_user_pair_assignments(system.molecules))
      out.push_back({gmosk_alphabet(system.molecules, system.x_max, p[0], p[1]),
                     gmosk_alphabet(system.molecules, system.x_max, q[0], q[1])});
  } else {
    throw UsageError("unknown baseline scheme '" + scheme + "' (expected csk or gmosk)");
  }
  return out;
}

std::vector<AlphabetTable> tables(const std::vector<FixedAlphabet>& alphabets) {
  std::vector<AlphabetTable> out;
  for (const auto& a : alphabets) out.push_back(a.table);
  return out;
}

EndToEndModel train_baseline_decoder(const std::vector<FixedAlphabet>& alphabets,
                                     const SystemConfig& system, const SensorModel& sensors,
                                     TrainConfig train_cfg, double ratio, double input_scale) {
  EndToEndModel model =
      make_fixed_transmitter_model(system, tables(alphabets), input_scale, train_cfg.seed);
  train_cfg.importance = importance_for_ratio(ratio);
  train(model, train_cfg, system, sensors);
  return model;
}

}  // namespace

BaselineChoice select_baseline_assignment(const std::string& scheme, const SystemConfig& system,
                                          const SensorModel& sensors, const TrainConfig& train_cfg,
                                          double input_scale, const SweepSettings& settings) {
  if (system.users != 2) throw UsageError("baseline assignment search needs two users");
  const auto candidates = baseline_candidates(scheme, system);
  BaselineChoice best;
  best.scheme = scheme;
  best.sser_at_unit_ratio = INFINITY;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    if (!molecules_disjoint(candidates[c])) continue;
    const EndToEndModel model =
        train_baseline_decoder(candidates[c], system, sensors, train_cfg, 1.0, input_scale);
    const SerRecord r = estimate_ser(model.alphabets(), DecoderDetector(model), system, sensors,
                                     {1.0, std::nullopt}, settings.trials, settings.seed,
                                     task_stream(3, 0xfffff, 0));
    log_info(scheme + " assignment " + std::to_string(c) + " SSER " + format_double(r.sser));
    if (r.sser < best.sser_at_unit_ratio) {
      best.sser_at_unit_ratio = r.sser;
      best.alphabets = candidates[c];
    }
  }
  return best;
}

std::vector<SerRecord> sweep_importance(const SystemConfig& system, const SensorModel& sensors,
                                        const std::map<double, const EndToEndModel*>& models,
                                        const std::vector<double>& ratios,
                                        const TrainConfig& baseline_train, double input_scale,
                                        const SweepSettings& settings) {
  if (system.users != 2) throw UsageError("sweep_importance: two-user systems only");
  for (double ratio : ratios) {
    const auto it = models.find(ratio);
    if (it == models.end() || !it->second)
      throw UsageError("sweep_importance: missing model for multi-user with ratio " +
                       format_double(ratio));
  }
  std::vector<SerRecord> out;
  for (std::size_t g = 0; g < ratios.size(); ++g) {
    const EndToEndModel& model = *models.at(ratios[g]);
    SerRecord r = estimate_ser(model.alphabets(), DecoderDetector(model), system, sensors,
                               {1.0, std::nullopt}, settings.trials, settings.seed,
                               task_stream(3, 0, g));
    label(r, "ae", "multi-user", ratios[g]);
    out.push_back(std::move(r));
  }
  for (const std::string scheme : {"csk", "gmosk"}) {
    const BaselineChoice choice =
        select_baseline_assignment(scheme, system, sensors, baseline_train, input_scale, settings);
    for (std::size_t g = 0; g < ratios.size(); ++g) {
      const EndToEndModel model = train_baseline_decoder(choice.alphabets, system, sensors,
                                                         baseline_train, ratios[g], input_scale);
      SerRecord r = estimate_ser(model.alphabets(), DecoderDetector(model), system, sensors,
                                 {1.0, std::nullopt}, settings.trials, settings.seed,
                                 task_stream(3, 0, g));
      label(r, scheme, "multi-user", ratios[g]);
      out.push_back(std::move(r));
    }
  }
  sort_records(out);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<ScatterCondition> default_scatter_conditions() {
  return {{"h-0.02", {0.02, 0.02}}, {"h-lim", {0.01, 0.03}}, {"h-full", {0.005, 0.05}}};
}

double chi_square_quantile(double probability, std::size_t dof) {
  boost::math::chi_squared dist(static_cast<double>(dof));
  return boost::math::quantile(dist, probability);
}

EllipseRecord fit_ellipse(const Matrix& samples, double coverage) {
  if (!(coverage > 0.0 && coverage < 1.0)) throw ConfigError("ellipse coverage must lie in (0, 1)");
  const std::size_t n = samples.rows(), R = samples.cols();
  if (n < 2) throw ConfigError("ellipse fit needs at least two samples");
  EllipseRecord e;
  e.coverage = coverage;
  e.quantile = chi_square_quantile(coverage, R);
  e.mean.assign(R, 0.0);
  e.covariance = Matrix(R, R, 0.0);
  std::vector<double> delta(R);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t r = 0; r < R; ++r) {
      delta[r] = samples(k, r) - e.mean[r];
      e.mean[r] += delta[r] / static_cast<double>(k + 1);
    }
    for (std::size_t a = 0; a < R; ++a)
      for (std::size_t b = 0; b < R; ++b)
        e.covariance(a, b) += delta[a] * (samples(k, b) - e.mean[b]);
  }
  for (auto& v : e.covariance.data()) v /= static_cast<double>(n - 1);
  return e;
}

double ellipse_coverage(const EllipseRecord& ellipse, const Matrix& samples) {
  const std::size_t R = ellipse.mean.size();
  if (samples.cols() != R) throw UsageError("ellipse_coverage: dimension mismatch");
  if (samples.rows() == 0) return 0.0;
  double trace = 0.0;
  for (std::size_t r = 0; r < R; ++r) trace += ellipse.covariance(r, r);
  std::size_t inside = 0;
  if (trace == 0.0) {
    for (std::size_t k = 0; k < samples.rows(); ++k) {
      bool same = true;
      for (std::size_t r = 0; r < R; ++r) same = same && samples(k, r) == ellipse.mean[r];
      inside += same;
    }
  } else {
    Eigen::MatrixXd c(R, R);
    for (std::size_t a = 0; a < R; ++a)
      for (std::size_t b = 0; b < R; ++b) c(a, b) = ellipse.covariance(a, b);
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) {
      c.diagonal().array() += GaussianSymbolModel::kRegularization * trace / static_cast<double>(R);
      llt.compute(c);
    }
    Eigen::VectorXd d(R);
    for (std::size_t k = 0; k < samples.rows(); ++k) {
      for (std::size_t r = 0; r < R; ++r) d(r) = samples(k, r) - ellipse.mean[r];
      const Eigen::VectorXd w = llt.matrixL().solve(d);
      inside += w.squaredNorm() <= ellipse.quantile;
    }
  }
  return static_cast<double>(inside) / static_cast<double>(samples.rows());
}

ScatterData export_scatter(const AlphabetTable& alphabet, SystemConfig system,
                           const SensorModel& sensors,
                           const std::vector<ScatterCondition>& conditions,
                           std::size_t samples_per_symbol, std::uint64_t seed, double coverage) {
  if (system.users != 1) throw UsageError("export_scatter: single-user alphabets only");
  if (samples_per_symbol < 2) throw ConfigError("export_scatter: need at least two samples");
  ScatterData data;
  data.conditions = conditions;
  const std::size_t R = sensors.sensor_count();
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    conditions[c].h.validate();
    for (int s = 0; s < alphabet.size(); ++s) {
      Rng rng = make_stream(seed, task_stream(4, c, static_cast<std::uint64_t>(s)));
      const MixtureVector xbar = alphabet.mixture(s);
      Matrix z(samples_per_symbol, R);
      for (std::size_t k = 0; k < samples_per_symbol; ++k) {
        const HRange& h = conditions[c].h;
        const double hk = h.fixed() ? h.lo : uniform(rng, h.lo, h.hi);
        system.channel = ChannelMatrixSet::uniform(1, system.molecules, hk);
        const auto zk = end_to_end_sample({xbar}, system, sensors, rng);
        std::copy(zk.begin(), zk.end(), z.row_span(k).begin());
        data.points.push_back({c, s, hk, zk});
      }
      EllipseRecord e = fit_ellipse(z, coverage);
      e.condition = c;
      e.symbol = s;
      data.ellipses.push_back(std::move(e));
    }
  }
  return data;
}

void write_scatter_points(std::ostream& out, const ScatterData& data) {
  const std::size_t R = data.points.empty() ? 0 : data.points.front().z.size();
  out << "condition,symbol,h";
  for (std::size_t r = 0; r < R; ++r) out << ",z" << r + 1;
  out << '\n';
  for (const auto& p : data.points) {
    out << data.conditions.at(p.condition).label << ',' << p.symbol << ',' << format_double(p.h);
    for (double v : p.z) out << ',' << format_double(v);
    out << '\n';
  }
}

void write_scatter_ellipses(std::ostream& out, const ScatterData& data) {
  const std::size_t R = data.ellipses.empty() ? 0 : data.ellipses.front().mean.size();
  out << "condition,symbol,coverage,quantile";
  for (std::size_t r = 0; r < R; ++r) out << ",mean" << r + 1;
  for (std::size_t a = 0; a < R; ++a)
    for (std::size_t b = 0; b < R; ++b) out << ",cov" << a + 1 << b + 1;
  out << '\n';
  for (const auto& e : data.ellipses) {
    out << data.conditions.at(e.condition).label << ',' << e.symbol << ','
        << format_double(e.coverage) << ',' << format_double(e.quantile);
    for (double v : e.mean) out << ',' << format_double(v);
    for (double v : e.covariance.data()) out << ',' << format_double(v);
    out << '\n';
  }
}

}  // namespace molmix
