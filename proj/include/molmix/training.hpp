#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "molmix/channel.hpp"
#include "molmix/networks.hpp"
#include "molmix/sensors.hpp"

namespace molmix {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int epochs = 250;
  int batches_per_epoch = 5;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  /// Importance factors, one per user. Rescaled to sum to U before use.
  std::vector<double> importance{1.0};
  /// Unset: the system's channel matrices. Set: h drawn per symbol.
  std::optional<HRange> h_range;
  std::uint64_t seed = 1;

  void validate(std::size_t users) const;
  std::vector<double> normalized_importance() const;
};

struct TrainReport {
  /// [epoch][user] mean cross-entropy over the epoch's batches.
  std::vector<std::vector<double>> epoch_user_loss;
  /// [epoch] mean weighted loss.
  std::vector<double> epoch_loss;
  /// How often each entry of the noise schedule was drawn.
  std::vector<int> nu_level_counts;
  std::size_t steps = 0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  TrainConfig config;
  /// The per-user cross-entropy is averaged over the batch, not summed.
  std::string loss_reduction = "mean";
};

struct BatchLoss {
  Var total;
  std::vector<Var> per_user;
};

/// sum_i lambda_i * mean_k CE(probs_i[k], symbols_i[k]) on the tape.
BatchLoss weighted_cross_entropy(Tape& tape, const std::vector<Var>& probs,
                                 const std::vector<std::vector<int>>& symbols,
                                 const std::vector<double>& importance);

/// Full forward pass (transmitters -> link -> decoder -> loss) for one batch
/// with pre-sampled randomness.
BatchLoss batch_loss(Tape& tape, EndToEndModel& model,
                     const std::vector<std::vector<int>>& symbols,
                     const std::vector<double>& importance, const SensorModel& sensors,
                     const LinkDraw& draw, NormMode mode, bool update_running);

/// i.i.d. uniform symbols: one batch of `count` per user.
std::vector<std::vector<int>> draw_symbols(const std::vector<int>& alphabet_sizes,
                                           std::size_t count, Rng& rng);

/// Joint gradient-descent training of every trainable part of `model`.
/// Deterministic given config.seed.
TrainReport train(EndToEndModel& model, const TrainConfig& config, SystemConfig system,
                  const SensorModel& sensors);

/// Finite-difference check of a freshly initialized autoencoder on one batch
/// with frozen noise draws.
GradCheckResult gradcheck_system(std::uint64_t seed, std::size_t batch = 8);

}  // namespace molmix
