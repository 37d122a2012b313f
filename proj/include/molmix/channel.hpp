#pragma once

// Release, propagation, accumulation and channel-noise stages of the
// molecule-mixture link, in sampling form and as tape-recorded batches.

#include <optional>
#include <span>
#include <vector>

#include "molmix/diffcore.hpp"
#include "molmix/rng.hpp"

namespace molmix {

/// Concentrations (ppm) of S molecule types.
using MixtureVector = std::vector<double>;

/// Gaussian noise with diagonal covariance nu * diag(variance).
struct NoiseSpec {
  std::vector<double> mean;
  std::vector<double> variance;
  double nu = 1.0;

  static NoiseSpec isotropic(std::size_t dim, double mean, double variance, double nu = 1.0);
  static NoiseSpec off(std::size_t dim) { return isotropic(dim, 0.0, 0.0, 0.0); }

  std::size_t dim() const { return mean.size(); }
  double stddev(std::size_t axis) const;
  void validate(std::size_t expected_dim, const char* what) const;
  /// Writes one draw into `out` (length dim()).
  void sample_into(Rng& rng, std::span<double> out) const;
  std::vector<double> sample(Rng& rng) const;
};

/// Diagonals of the per-user attenuation matrices H_i.
struct ChannelMatrixSet {
  std::vector<std::vector<double>> diagonals;

  static ChannelMatrixSet uniform(std::size_t users, std::size_t molecules, double h);
  std::size_t users() const { return diagonals.size(); }
  void validate(std::size_t users, std::size_t molecules) const;
};

/// Closed interval of attenuations; a degenerate interval is a fixed h.
struct HRange {
  double lo = 0.0;
  double hi = 0.0;
  bool fixed() const { return lo == hi; }
  void validate() const;
  bool operator==(const HRange&) const = default;
};

/// {10^(l/5) : l = -5..5}.
std::vector<double> default_nu_levels();

struct SystemConfig {
  std::size_t users = 1;
  std::size_t molecules = 3;
  std::size_t sensors = 2;
  std::vector<int> alphabet_sizes{4};
  double x_max = 2e4;
  ChannelMatrixSet channel = ChannelMatrixSet::uniform(1, 3, 0.01);
  NoiseSpec tx_noise = NoiseSpec::isotropic(3, 0.0, 1e6);
  NoiseSpec channel_noise = NoiseSpec::isotropic(3, 10.0, 10.0);
  NoiseSpec rx_noise = NoiseSpec::isotropic(2, 0.0, 1e-13);
  /// Noise multipliers drawn per training batch.
  std::vector<double> nu_levels = default_nu_levels();

  void validate() const;
  /// Scales all three noise covariances by `nu`.
  void set_nu(double nu);
  double nu() const { return tx_noise.nu; }
  int total_symbols() const;
  /// Number of joint symbol tuples, prod_i N_i.
  std::size_t tuple_count() const;
};

/// x = max(0, xbar + n_TX).
MixtureVector release(std::span<const double> xbar, const NoiseSpec& tx_noise, Rng& rng);

/// ybar = sum_i H_i x_i.
MixtureVector propagate_accumulate(const std::vector<MixtureVector>& released,
                                   const ChannelMatrixSet& channel);

/// y = max(0, ybar + n_C).
MixtureVector channel_noise(std::span<const double> ybar, const NoiseSpec& noise, Rng& rng);

/// Pre-sampled randomness for a batch of K channel uses.
struct LinkDraw {
  std::vector<Matrix> tx_noise;     // per user, K x S
  std::vector<Matrix> attenuation;  // per user, K x S
  Matrix channel_noise;             // K x S
  Matrix rx_noise;                  // K x R
  std::size_t batch() const { return channel_noise.rows(); }
};

/// Samples all noise for K channel uses. With `h_range` set, each user's
/// attenuation is redrawn per item uniformly from the range and applied to
/// every molecule type; otherwise the configured diagonals are used.
LinkDraw draw_link(const SystemConfig& config, std::size_t batch,
                   const std::optional<HRange>& h_range, Rng& rng);

/// Records release, propagation, accumulation and channel noise on the tape.
/// `xbar` holds one K x S node per user; returns the K x S node y.
Var record_channel(Tape& tape, const std::vector<Var>& xbar, const LinkDraw& draw);

/// Plain (untaped) batch version of record_channel.
Matrix apply_channel(const std::vector<Matrix>& xbar, const LinkDraw& draw);

}  // namespace molmix
