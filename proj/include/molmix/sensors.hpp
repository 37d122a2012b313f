#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "molmix/channel.hpp"
#include "molmix/diffcore.hpp"

namespace molmix {

/// Memory-free sensor-array response f: R^S_{>=0} -> R^R.
///
/// Implementations provide both a plain evaluation and a tape-recorded one;
/// the two must agree on values.
class SensorModel {
 public:
  virtual ~SensorModel() = default;

  virtual std::size_t sensor_count() const = 0;
  virtual std::size_t molecule_count() const = 0;

  /// Writes f(y) into `out`. Requires y >= 0 elementwise.
  virtual void respond_into(std::span<const double> y, std::span<double> out) const = 0;
  /// Records f applied row-wise to a K x S node; returns a K x R node.
  virtual Var record(Tape& tape, Var y) const = 0;

  std::vector<double> respond(std::span<const double> y) const;
  /// Row-wise f over a K x S batch.
  Matrix respond_batch(const Matrix& y) const;
};

/// Additive per-molecule power laws: f_r(y) = sum_m gains(r,m) * y_m^exponents(r,m).
class SensorArray final : public SensorModel {
 public:
  /// Floor applied to y when evaluating the derivative of y^b.
  static constexpr double kDerivativeFloor = 1e-12;

  SensorArray() = default;
  SensorArray(Matrix gains, Matrix exponents, std::uint64_t seed = 0, double z_scale = 0.0);

  std::size_t sensor_count() const override { return gains_.rows(); }
  std::size_t molecule_count() const override { return gains_.cols(); }
  void respond_into(std::span<const double> y, std::span<double> out) const override;
  Var record(Tape& tape, Var y) const override;

  const Matrix& gains() const { return gains_; }
  const Matrix& exponents() const { return exponents_; }
  std::uint64_t seed() const { return seed_; }
  double z_scale() const { return z_scale_; }

  bool operator==(const SensorArray& o) const {
    return gains_ == o.gains_ && exponents_ == o.exponents_ && seed_ == o.seed_ &&
           z_scale_ == o.z_scale_;
  }

 private:
  Matrix gains_;
  Matrix exponents_;
  std::uint64_t seed_ = 0;
  double z_scale_ = 0.0;
};

struct SensorGenerationOptions {
  double exponent_min = 0.4;
  double exponent_max = 1.0;
  /// Raw gains are 10^U(0, gain_decades) before calibration.
  double gain_decades = 2.0;
};

/// Draws a random cross-reactive array and rescales each sensor so that its
/// response to the reference mixture h_ref * x_max * 1 equals z_scale.
SensorArray generate_array(std::size_t molecules, std::size_t sensors, std::uint64_t seed,
                           double z_scale, double h_ref, double x_max,
                           const SensorGenerationOptions& options = {});

/// z = f(y) + n_RX. No clipping: z may be negative.
std::vector<double> sense(std::span<const double> y, const SensorModel& sensors,
                          const NoiseSpec& rx_noise, Rng& rng);

/// One independent draw of the full link for one symbol per user:
/// release, attenuation, accumulation, channel noise and sensing.
std::vector<double> end_to_end_sample(const std::vector<MixtureVector>& xbar,
                                      const SystemConfig& config, const SensorModel& sensors,
                                      Rng& rng);

/// Batch form driven by pre-sampled draws: z = f(channel(xbar)) + n_RX.
Matrix simulate_batch(const std::vector<Matrix>& xbar, const SensorModel& sensors,
                      const LinkDraw& draw);

/// Tape-recorded batch form of simulate_batch.
Var record_link(Tape& tape, const std::vector<Var>& xbar, const SensorModel& sensors,
                const LinkDraw& draw);

}  // namespace molmix
