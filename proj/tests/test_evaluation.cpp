#include <cmath>
#include <sstream>

#include "doctest.h"
#include "molmix/evaluation.hpp"
#include "oracles.hpp"

using namespace molmix;

namespace {

SystemConfig single_user() {
  SystemConfig c;
  c.alphabet_sizes = {4};
  return c;
}

class ConstantDetector final : public Detector {
 public:
  std::size_t users() const override { return 1; }
  std::vector<std::vector<int>> detect(const Matrix& z) const override {
    return std::vector<std::vector<int>>(1, std::vector<int>(z.rows(), 0));
  }
};

/// Reads the symbol off a 1-D noise-free output (z = symbol) and then
/// replaces it by a wrong symbol with probability p.
class FlipDetector final : public Detector {
 public:
  FlipDetector(double p, std::uint64_t seed) : p_(p), rng_(make_stream(seed, 77)) {}
  std::size_t users() const override { return 1; }
  std::vector<std::vector<int>> detect(const Matrix& z) const override {
    std::vector<int> out(z.rows());
    for (std::size_t k = 0; k < z.rows(); ++k) {
      int s = static_cast<int>(std::lround(z(k, 0)));
      if (uniform(rng_, 0.0, 1.0) < p_) s = (s + 1 + uniform_index(rng_, 3)) % 4;
      out[k] = s;
    }
    return {out};
  }

 private:
  double p_;
  mutable Rng rng_;
};

SystemConfig identity_link() {
  SystemConfig c;
  c.molecules = 1;
  c.sensors = 1;
  c.alphabet_sizes = {4};
  c.channel = ChannelMatrixSet::uniform(1, 1, 1.0);
  c.tx_noise = NoiseSpec::off(1);
  c.channel_noise = NoiseSpec::off(1);
  c.rx_noise = NoiseSpec::off(1);
  return c;
}

SerRecord sample_record(const std::string& scheme, double nu, std::size_t users) {
  SerRecord r;
  r.scheme = scheme;
  r.scenario = "full-csi";
  r.nu = nu;
  r.h_lo = 0.01;
  r.h_hi = 0.03;
  r.lambda_ratio = 1.0 / 3.0;
  for (std::size_t i = 0; i < users; ++i) {
    r.ser.push_back(0.1 * static_cast<double>(i + 1) / 7.0);
    r.ser_ci95.push_back(wilson_half_width(i + 3, 1000));
  }
  r.sser = 0.123456789012345678;
  r.trials = 1000;
  r.ci95 = wilson_half_width(17, 2000);
  r.seed = 42;
  return r;
}

}  // namespace

TEST_CASE("Wilson half-width matches the score-interval formula") {
  for (auto [e, n] : {std::pair<std::size_t, std::size_t>{0, 100}, {5, 100}, {50, 100},
                      {100, 100}, {3, 100000}}) {
    const auto [lo, hi] = oracle::wilson_bounds(static_cast<double>(e), static_cast<double>(n),
                                                kWilsonZ);
    CHECK(wilson_half_width(e, n) == doctest::Approx(0.5 * (hi - lo)).epsilon(1e-12));
  }
}

TEST_CASE("a noise-free link with nearest-mean detection has zero error") {
  SystemConfig c = single_user();
  c.set_nu(0.0);
  const SensorArray s = generate_array(3, 2, 11, 1e-5, 0.01, 2e4);
  const AlphabetTable a = mda_build(candidate_grid(3, 2e4), 4, c, s);
  const AmlDetector d(aml_fit({a}, c, s, 4, 1));
  const SerRecord r = estimate_ser({a}, d, c, s, {0.0, {}}, 20000, 1, 0);
  CHECK(r.ser[0] == 0.0);
  CHECK(r.sser == 0.0);
  CHECK(r.h_lo == 0.01);
  CHECK(r.h_hi == 0.01);
}

TEST_CASE("a constant detector errs three times in four") {
  const SystemConfig c = single_user();
  const SensorArray s = generate_array(3, 2, 11, 1e-5, 0.01, 2e4);
  const AlphabetTable a = csk_alphabet(3, 2e4, 0).table;
  const SerRecord r = estimate_ser({a}, ConstantDetector(), c, s, {1.0, {}}, 100000, 3, 0);
  CHECK(std::abs(r.ser[0] - 0.75) <= r.ser_ci95[0] * 1.5);
  CHECK(r.ser_ci95[0] == doctest::Approx(wilson_half_width(
                             static_cast<std::size_t>(std::lround(r.ser[0] * 1e5)), 100000)));
}

TEST_CASE("the estimator is unbiased and its interval covers the truth") {
  const SystemConfig c = identity_link();
  const SensorArray s(Matrix{{1.0}}, Matrix{{1.0}});
  const AlphabetTable a{Matrix{{0.0}, {1.0}, {2.0}, {3.0}}};
  const double p = 0.2;
  const int reps = 100;
  double mean = 0.0;
  int covered = 0;
  for (int rep = 0; rep < reps; ++rep) {
    const FlipDetector d(p, static_cast<std::uint64_t>(rep));
    const SerRecord r = estimate_ser({a}, d, c, s, {1.0, {}}, 2000,
                                     static_cast<std::uint64_t>(rep), 0);
    mean += r.ser[0] / reps;
    covered += std::abs(r.ser[0] - p) <= r.ser_ci95[0];
  }
  // Standard error of the mean over 2e5 trials is ~9e-4.
  CHECK(std::abs(mean - p) < 4e-3);
  CHECK(covered >= 88);
}

TEST_CASE("estimates are reproducible and depend on the stream") {
  const SystemConfig c = single_user();
  const SensorArray s = generate_array(3, 2, 11, 1e-5, 0.01, 2e4);
  const AlphabetTable a = csk_alphabet(3, 2e4, 1).table;
  c.validate();
  const AmlDetector d(aml_fit({a}, c, s, 200, 1));
  const SerRecord r1 = estimate_ser({a}, d, c, s, {10.0, {}}, 5000, 9, 4);
  const SerRecord r2 = estimate_ser({a}, d, c, s, {10.0, {}}, 5000, 9, 4);
  const SerRecord r3 = estimate_ser({a}, d, c, s, {10.0, {}}, 5000, 9, 5);
  CHECK(r1 == r2);
  CHECK(r1.ser != r3.ser);
}

TEST_CASE("CSV output round-trips exactly") {
  std::vector<SerRecord> records{sample_record("ae-n4", 0.1, 1), sample_record("csk", 1.0, 2),
                                 sample_record("ae", 3.1622776601683795, 2)};
  records[1].scenario = "multi-user";
  records[2].scenario = "multi-user";
  sort_records(records);
  std::stringstream ss;
  write_csv(ss, records);
  const std::string text = ss.str();
  CHECK(text.rfind(std::string(kCsvHeader) + "\n", 0) == 0);
  const auto parsed = parse_csv(ss);
  CHECK(parsed == records);
  std::stringstream again;
  write_csv(again, parsed);
  CHECK(again.str() == text);
}

TEST_CASE("CSV parsing rejects malformed input") {
  std::stringstream bad_header("scheme,nu\n");
  CHECK_THROWS_AS(parse_csv(bad_header), ConfigError);
  std::stringstream short_row(std::string(kCsvHeader) + "\nae,full-csi,1\n");
  CHECK_THROWS_AS(parse_csv(short_row), ConfigError);
}

TEST_CASE("format_double is shortest round-trip") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  const double third = 1.0 / 3.0;
  CHECK(std::stod(format_double(third)) == third);
}

TEST_CASE("noise sweep yields one record per scheme, size and level") {
  SystemConfig c = single_user();
  const SensorArray s = generate_array(3, 2, 11, 1e-5, 0.01, 2e4);
  std::map<int, EndToEndModel> owned;
  std::map<int, const EndToEndModel*> models;
  for (int n : {4, 8, 16}) {
    SystemConfig sys = c;
    sys.alphabet_sizes = {n};
    owned.emplace(n, make_autoencoder(sys, 1e5, 1));
    models[n] = &owned.at(n);
  }
  const SweepSettings settings{200, 20, 4, 1};
  const auto records = sweep_snr(c, s, models, default_nu_levels(), settings);
  CHECK(records.size() == 66);
  for (std::size_t i = 1; i < records.size(); ++i)
    CHECK_FALSE(record_less(records[i], records[i - 1]));
}

TEST_CASE("attenuation sweep covers the design point for every scheme") {
  SystemConfig c = single_user();
  c.channel = ChannelMatrixSet::uniform(1, 3, 0.02);
  const SensorArray s = generate_array(3, 2, 11, 1e-5, 0.02, 2e4);
  SystemConfig sys = c;
  sys.alphabet_sizes = {6};
  const EndToEndModel a = make_autoencoder(sys, 1e5, 1), b = make_autoencoder(sys, 1e5, 2),
                      d = make_autoencoder(sys, 1e5, 3);
  const auto records =
      sweep_h(c, s, {{6, HSweepModels{&a, &b, &d}}}, default_h_grid(), 0.02, {100, 20, 4, 1});
  CHECK(records.size() == 40);
  int at_design = 0;
  for (const auto& r : records) at_design += r.h_lo == 0.02 && r.h_hi == 0.02;
  CHECK(at_design == 4);
  CHECK_THROWS_AS(sweep_h(c, s, {{6, HSweepModels{&a, nullptr, &d}}}, {0.02}, 0.02, {}),
                  UsageError);
}

TEST_CASE("importance sweep requires a model for every ratio") {
  SystemConfig c;
  c.users = 2;
  c.molecules = 4;
  c.sensors = 3;
  c.alphabet_sizes = {4, 4};
  c.channel = ChannelMatrixSet::uniform(2, 4, 0.01);
  c.tx_noise = NoiseSpec::isotropic(4, 0.0, 1e6);
  c.channel_noise = NoiseSpec::isotropic(4, 10.0, 10.0);
  c.rx_noise = NoiseSpec::isotropic(3, 0.0, 1e-13);
  const SensorArray s = generate_array(4, 3, 11, 1e-5, 0.01, 1.5e4);
  const EndToEndModel m = make_autoencoder(c, 1e5, 1);
  try {
    sweep_importance(c, s, {{1.0, &m}}, {1.0, 3.0}, TrainConfig{}, 1e5, {});
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("ratio 3") != std::string::npos);
  }
}

TEST_CASE("importance factors follow the ratio and sum to two") {
  for (double r : default_ratio_grid()) {
    const auto l = importance_for_ratio(r);
    CHECK(l[0] + l[1] == doctest::Approx(2.0));
    CHECK(l[1] / l[0] == doctest::Approx(r));
  }
  CHECK_THROWS_AS(importance_for_ratio(0.0), ConfigError);
}

TEST_CASE("scatter export fits one ellipse per symbol and condition") {
  SystemConfig c = single_user();
  c.alphabet_sizes = {6};
  const SensorArray s = generate_array(3, 2, 11, 1e-5, 0.02, 2e4);
  const AlphabetTable a = mda_build(candidate_grid(3, 2e4), 6, c, s);
  const ScatterData data = export_scatter(a, c, s, default_scatter_conditions(), 50, 1);
  CHECK(data.ellipses.size() == 18);
  CHECK(data.points.size() == 18 * 50);
  for (const auto& p : data.points) {
    const HRange& h = data.conditions[p.condition].h;
    CHECK(p.h >= h.lo);
    CHECK(p.h <= h.hi);
  }
  std::stringstream pts, ell;
  write_scatter_points(pts, data);
  write_scatter_ellipses(ell, data);
  CHECK(pts.str().rfind("condition,symbol,h,z1,z2\n", 0) == 0);
  CHECK(ell.str().rfind("condition,symbol,coverage,quantile,mean1,mean2,cov11", 0) == 0);
}

TEST_CASE("a zero-covariance ellipse contains only its centre") {
  const Matrix same(10, 2, 3.0);
  const EllipseRecord e = fit_ellipse(same, 0.95);
  CHECK(e.covariance == Matrix(2, 2, 0.0));
  CHECK(ellipse_coverage(e, same) == 1.0);
  CHECK(ellipse_coverage(e, Matrix{{3.0, 3.0000001}}) == 0.0);
}

TEST_CASE("fitted ellipses cover about 95 percent of fresh Gaussian samples") {
  Rng rng = make_stream(10, 0);
  auto draw = [&](std::size_t n) {
    Matrix m(n, 2);
    for (std::size_t k = 0; k < n; ++k) {
      const double a = standard_normal(rng), b = standard_normal(rng);
      m(k, 0) = 5.0 + 2.0 * a;
      m(k, 1) = -1.0 + 0.8 * a + 0.3 * b;
    }
    return m;
  };
  const EllipseRecord e = fit_ellipse(draw(20000), 0.95);
  const double cov = ellipse_coverage(e, draw(20000));
  CHECK(cov >= 0.93);
  CHECK(cov <= 0.97);
  CHECK(chi_square_quantile(0.95, 2) == doctest::Approx(-2.0 * std::log(0.05)).epsilon(1e-12));
}
