#include <cmath>
#include <limits>

#include "doctest.h"
#include "molmix/detector.hpp"
#include "molmix/evaluation.hpp"
#include "molmix/scenarios.hpp"
#include "molmix/training.hpp"

using namespace molmix;

namespace {

double loss_of(const std::vector<Matrix>& probs, const std::vector<std::vector<int>>& symbols,
               const std::vector<double>& lambda) {
  Tape t;
  std::vector<Var> p;
  for (const Matrix& m : probs) p.push_back(t.constant(m));
  return t.value(weighted_cross_entropy(t, p, symbols, lambda).total)[0];
}

ExperimentConfig short_run(const std::string& scenario, int epochs, std::uint64_t seed) {
  ExperimentConfig c = scenario_preset(scenario);
  c.train.epochs = epochs;
  c.train.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("cross-entropy identities") {
  const std::vector<std::vector<int>> one{{0, 1, 2, 3}};
  Matrix perfect(4, 4, 0.0);
  for (std::size_t k = 0; k < 4; ++k) perfect(k, k) = 1.0;
  CHECK(loss_of({perfect}, one, {1.0}) == 0.0);
  CHECK(std::abs(loss_of({Matrix(4, 4, 0.25)}, one, {1.0}) - std::log(4.0)) <= 1e-12);

  const std::vector<std::vector<int>> three{{0, 1}, {2, 3}, {1, 1}};
  TrainConfig cfg;
  cfg.importance = {0.2, 0.5, 0.3};
  const auto lambda = cfg.normalized_importance();
  CHECK(lambda[0] + lambda[1] + lambda[2] == doctest::Approx(3.0));
  const std::vector<Matrix> uniform(3, Matrix(2, 4, 0.25));
  CHECK(loss_of(uniform, three, lambda) == doctest::Approx(3.0 * std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("weighted loss is linear in the importance factors and positive") {
  Rng rng = make_stream(1, 0);
  std::vector<Matrix> probs;
  for (int i = 0; i < 2; ++i) {
    Matrix p(8, 4);
    for (std::size_t k = 0; k < 8; ++k) {
      double s = 0.0;
      for (auto& v : p.row_span(k)) s += (v = uniform(rng, 0.05, 1.0));
      for (auto& v : p.row_span(k)) v /= s;
    }
    probs.push_back(p);
  }
  const auto symbols = draw_symbols({4, 4}, 8, rng);
  const double base = loss_of(probs, symbols, {0.7, 1.3});
  CHECK(base > 0.0);
  CHECK(loss_of(probs, symbols, {2.1, 3.9}) == doctest::Approx(3.0 * base).epsilon(1e-12));
  const double u1 = loss_of(probs, symbols, {1.0, 0.0});
  const double u2 = loss_of(probs, symbols, {0.0, 1.0});
  CHECK(base == doctest::Approx(0.7 * u1 + 1.3 * u2).epsilon(1e-12));
}

TEST_CASE("training is bit-identical for equal seeds") {
  ExperimentConfig c = short_run("full-csi", 10, 3);
  const TrainedModel a = train_scenario(c);
  const TrainedModel b = train_scenario(c);
  CHECK(a.report.epoch_loss == b.report.epoch_loss);
  for (std::size_t i = 0; i < a.model.params.count(); ++i)
    CHECK(a.model.params.entries()[i].value == b.model.params.entries()[i].value);
  CHECK(a.model.decoder.norm_state().running_mean == b.model.decoder.norm_state().running_mean);
}

TEST_CASE("training reduces the loss for every seed") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const TrainedModel m = train_scenario(short_run("full-csi", 60, seed));
    const auto& loss = m.report.epoch_loss;
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 5; ++i) {
      head += loss[static_cast<std::size_t>(i)];
      tail += loss[loss.size() - 1 - static_cast<std::size_t>(i)];
    }
    CHECK(tail < 0.7 * head);
  }
}

TEST_CASE("every noise level is drawn during training") {
  const TrainedModel m = train_scenario(short_run("full-csi", 40, 2));
  int total = 0;
  for (int n : m.report.nu_level_counts) {
    CHECK(n > 0);
    total += n;
  }
  CHECK(total == 40 * 5);
  CHECK(m.report.steps == 200);
}

TEST_CASE("a user with zero importance is not learned") {
  ExperimentConfig c = short_run("multi-user", 80, 4);
  c.train.importance = {1.0, 0.0};
  const TrainedModel m = train_scenario(c);
  const SensorArray sensors = c.sensors.build(c.system);
  const DecoderDetector detector(m.model);
  const SerRecord r =
      estimate_ser(m.model.alphabets(), detector, c.system, sensors, {1.0, {}}, 20000, 1, 0);
  CHECK(r.ser[0] < 0.2);
  CHECK(r.ser[1] > 0.5);
}

TEST_CASE("presets carry the training defaults") {
  const ExperimentConfig c = scenario_preset("full-csi");
  CHECK(c.train.epochs == 250);
  CHECK(c.train.batches_per_epoch == 5);
  CHECK(c.train.batch_size == 256);
  CHECK(c.train.learning_rate == 1e-3);
  CHECK(c.system.nu_levels.size() == 11);
  CHECK(scenario_preset("h-lim").train.h_range == HRange{0.01, 0.03});
  CHECK(scenario_preset("h-full").train.h_range == HRange{0.005, 0.05});
  CHECK_FALSE(scenario_preset("h-fixed").train.h_range.has_value());
  const auto mu = scenario_preset("multi-user", 0, 3.0);
  CHECK(mu.train.importance[1] == doctest::Approx(3.0 * mu.train.importance[0]));
  CHECK_THROWS_AS(scenario_preset("nonsense"), UsageError);
}

TEST_CASE("a non-finite loss stops training with context") {
  ExperimentConfig c = short_run("full-csi", 3, 1);
  const SensorArray sensors = c.sensors.build(c.system);
  EndToEndModel m = make_autoencoder(c.system, c.input_scale(), 1);
  m.params.value(m.decoder.parameter_ids()[7])[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(m, c.train, c.system, sensors);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch 1") != std::string::npos);
    CHECK(msg.find("nu") != std::string::npos);
  }
}

TEST_CASE("system gradient check passes for several seeds") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const GradCheckResult r = gradcheck_system(seed);
    CHECK(r.coordinates > 0);
    CHECK(r.max_relative_error < 1e-2);
    CHECK(r.fraction_below_tight >= 0.99);
  }
}

TEST_CASE("invalid training settings are configuration errors") {
  TrainConfig t;
  t.importance = {1.0, 2.0};
  CHECK_THROWS_AS(t.validate(1), ConfigError);
  t.importance = {0.0, 0.0};
  CHECK_THROWS_AS(t.validate(2), ConfigError);
  t.importance = {1.0};
  t.batch_size = 1;
  CHECK_THROWS_AS(t.validate(1), ConfigError);
}
