#include "molmix/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "molmix/log.hpp"

namespace molmix {

void TrainConfig::validate(std::size_t users) const {
  if (epochs < 1 || batches_per_epoch < 1) throw ConfigError("train: epochs and batches must be >= 1");
  if (batch_size < 2) throw ConfigError("train: batch size must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (importance.size() != users)
    throw ConfigError("train: " + std::to_string(importance.size()) +
                      " importance factors for " + std::to_string(users) + " users");
  bool any_positive = false;
  for (double l : importance) {
    if (!(l >= 0.0)) throw ConfigError("train: importance factors must be >= 0");
    any_positive = any_positive || l > 0.0;
  }
  if (!any_positive) throw ConfigError("train: at least one importance factor must be positive");
  if (h_range) h_range->validate();
}

std::vector<double> TrainConfig::normalized_importance() const {
  const double total = std::accumulate(importance.begin(), importance.end(), 0.0);
  std::vector<double> out(importance);
  for (auto& l : out) l *= static_cast<double>(importance.size()) / total;
  return out;
}

BatchLoss weighted_cross_entropy(Tape& tape, const std::vector<Var>& probs,
                                 const std::vector<std::vector<int>>& symbols,
                                 const std::vector<double>& importance) {
  if (probs.size() != symbols.size() || probs.size() != importance.size())
    throw ConfigError("loss: mismatched user counts");
  BatchLoss out;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    Var ce = tape.cross_entropy(probs[i], symbols[i]);
    out.per_user.push_back(ce);
    Var term = tape.scale(ce, importance[i]);
    out.total = out.total.valid() ? tape.add(out.total, term) : term;
  }
  return out;
}

BatchLoss batch_loss(Tape& tape, EndToEndModel& model,
                     const std::vector<std::vector<int>>& symbols,
                     const std::vector<double>& importance, const SensorModel& sensors,
                     const LinkDraw& draw, NormMode mode, bool update_running) {
  auto xbar = model.record_transmitters(tape, symbols);
  Var z = record_link(tape, xbar, sensors, draw);
  auto probs = model.decoder.record(tape, z, mode, update_running);
  return weighted_cross_entropy(tape, probs, symbols, importance);
}

std::vector<std::vector<int>> draw_symbols(const std::vector<int>& alphabet_sizes,
                                           std::size_t count, Rng& rng) {
  std::vector<std::vector<int>> out;
  for (int n : alphabet_sizes) {
    std::vector<int> s(count);
    for (auto& v : s) v = uniform_index(rng, n);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::string describe_h(const LinkDraw& draw) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& m : draw.attenuation)
    for (double v : m.data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  std::ostringstream s;
  s << "h in [" << lo << ", " << hi << "]";
  return s.str();
}

}  // namespace

TrainReport train(EndToEndModel& model, const TrainConfig& config, SystemConfig system,
                  const SensorModel& sensors) {
  system.validate();
  config.validate(system.users);
  if (model.users() != system.users) throw ConfigError("train: model/system user count mismatch");
  if (system.nu_levels.empty()) throw ConfigError("train: empty noise schedule");

  const auto start = std::chrono::steady_clock::now();
  const auto lambda = config.normalized_importance();
  Rng rng = make_stream(config.seed, 1);

  TrainReport report;
  report.seed = config.seed;
  report.config = config;
  report.nu_level_counts.assign(system.nu_levels.size(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<double> user_loss(system.users, 0.0);
    double total_loss = 0.0;
    for (int b = 0; b < config.batches_per_epoch; ++b) {
      const int level = uniform_index(rng, static_cast<int>(system.nu_levels.size()));
      ++report.nu_level_counts[static_cast<std::size_t>(level)];
      system.set_nu(system.nu_levels[static_cast<std::size_t>(level)]);
      const auto symbols = draw_symbols(system.alphabet_sizes, config.batch_size, rng);
      const LinkDraw draw = draw_link(system, config.batch_size, config.h_range, rng);

      model.params.zero_grad();
      Tape tape(&model.params);
      const BatchLoss loss =
          batch_loss(tape, model, symbols, lambda, sensors, draw, NormMode::kTrain, true);
      const double value = tape.value(loss.total)[0];
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch + 1 << ", batch " << b + 1
            << ", nu = " << system.nu() << ", " << describe_h(draw);
        throw TrainingError(msg.str());
      }
      tape.backward(loss.total);
      model.params.adam_step(config.learning_rate);
      ++report.steps;

      total_loss += value;
      for (std::size_t i = 0; i < system.users; ++i)
        user_loss[i] += tape.value(loss.per_user[i])[0];
    }
    for (auto& l : user_loss) l /= config.batches_per_epoch;
    report.epoch_user_loss.push_back(std::move(user_loss));
    report.epoch_loss.push_back(total_loss / config.batches_per_epoch);
    if ((epoch + 1) % 50 == 0)
      log_info("epoch " + std::to_string(epoch + 1) + " loss " +
               std::to_string(report.epoch_loss.back()));
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

GradCheckResult gradcheck_system(std::uint64_t seed, std::size_t batch) {
  Rng rng = make_stream(seed, 0x6763);
  SystemConfig system;
  system.users = 1 + static_cast<std::size_t>(uniform_index(rng, 2));
  system.molecules = system.users == 1 ? 3 : 4;
  system.sensors = system.users == 1 ? 2 : 3;
  system.alphabet_sizes.assign(system.users, 4);
  system.x_max = 2e4;
  system.channel = ChannelMatrixSet::uniform(system.users, system.molecules, 0.01);
  system.tx_noise = NoiseSpec::isotropic(system.molecules, 0.0, 1e6);
  system.channel_noise = NoiseSpec::isotropic(system.molecules, 10.0, 10.0);
  system.rx_noise = NoiseSpec::isotropic(system.sensors, 0.0, 1e-13);
  system.set_nu(std::pow(10.0, uniform_index(rng, 11) / 5.0 - 1.0));

  const double z_scale = 1e-5;
  const SensorArray sensors =
      generate_array(system.molecules, system.sensors, seed + 101, z_scale, 0.01, system.x_max);
  EndToEndModel model = make_autoencoder(system, 1.0 / z_scale, seed);
  const auto symbols = draw_symbols(system.alphabet_sizes, batch, rng);
  const LinkDraw draw = draw_link(system, batch, HRange{0.005, 0.05}, rng);
  std::vector<double> lambda(system.users);
  for (auto& l : lambda) l = uniform(rng, 0.5, 1.5);

  auto loss_fn = [&](bool record) {
    Tape tape(&model.params);
    const BatchLoss loss =
        batch_loss(tape, model, symbols, lambda, sensors, draw, NormMode::kTrain, false);
    if (record) tape.backward(loss.total);
    return LossProbe{tape.value(loss.total)[0], tape.kink_signature()};
  };
  return finite_difference_check(model.params, loss_fn);
}

}  // namespace molmix
