#include "molmix/sensors.hpp"

#include <cmath>
#include <string>

namespace molmix {

std::vector<double> SensorModel::respond(std::span<const double> y) const {
  std::vector<double> out(sensor_count());
  respond_into(y, out);
  return out;
}

Matrix SensorModel::respond_batch(const Matrix& y) const {
  Matrix z(y.rows(), sensor_count());
  for (std::size_t k = 0; k < y.rows(); ++k) respond_into(y.row_span(k), z.row_span(k));
  return z;
}

SensorArray::SensorArray(Matrix gains, Matrix exponents, std::uint64_t seed, double z_scale)
    : gains_(std::move(gains)), exponents_(std::move(exponents)), seed_(seed), z_scale_(z_scale) {
  if (!gains_.same_shape(exponents_))
    throw ConfigError("sensor array: gains " + shape_string(gains_) + " vs exponents " +
                      shape_string(exponents_));
  if (gains_.empty()) throw ConfigError("sensor array: empty");
  for (std::size_t i = 0; i < gains_.size(); ++i) {
    if (!(gains_[i] > 0.0)) throw ConfigError("sensor array: gains must be positive");
    if (!(exponents_[i] > 0.0)) throw ConfigError("sensor array: exponents must be positive");
  }
}

void SensorArray::respond_into(std::span<const double> y, std::span<double> out) const {
  const std::size_t S = molecule_count(), R = sensor_count();
  if (y.size() != S || out.size() != R)
    throw ConfigError("respond: expected " + std::to_string(S) + " concentrations");
  for (double v : y)
    if (v < 0.0) throw UsageError("respond: negative concentration " + std::to_string(v));
  for (std::size_t r = 0; r < R; ++r) {
    double acc = 0.0;
    for (std::size_t m = 0; m < S; ++m) acc += gains_(r, m) * std::pow(y[m], exponents_(r, m));
    out[r] = acc;
  }
}

Var SensorArray::record(Tape& tape, Var y) const {
  return tape.power_law(y, gains_, exponents_, kDerivativeFloor);
}

SensorArray generate_array(std::size_t molecules, std::size_t sensors, std::uint64_t seed,
                           double z_scale, double h_ref, double x_max,
                           const SensorGenerationOptions& options) {
  if (molecules < 1 || sensors < 1) throw ConfigError("generate_array: S and R must be >= 1");
  if (!(z_scale > 0.0) || !(h_ref > 0.0) || !(x_max > 0.0))
    throw ConfigError("generate_array: z_scale, h_ref and x_max must be positive");
  Rng rng = make_stream(seed, 0);
  Matrix gains(sensors, molecules), exponents(sensors, molecules);
  for (std::size_t i = 0; i < gains.size(); ++i) {
    exponents[i] = uniform(rng, options.exponent_min, options.exponent_max);
    gains[i] = std::pow(10.0, uniform(rng, 0.0, options.gain_decades));
  }
  const double y_ref = h_ref * x_max;
  for (std::size_t r = 0; r < sensors; ++r) {
    double response = 0.0;
    for (std::size_t m = 0; m < molecules; ++m)
      response += gains(r, m) * std::pow(y_ref, exponents(r, m));
    const double factor = z_scale / response;
    for (std::size_t m = 0; m < molecules; ++m) gains(r, m) *= factor;
  }
  return SensorArray(std::move(gains), std::move(exponents), seed, z_scale);
}

std::vector<double> sense(std::span<const double> y, const SensorModel& sensors,
                          const NoiseSpec& rx_noise, Rng& rng) {
  std::vector<double> z = sensors.respond(y);
  if (rx_noise.dim() != z.size()) throw ConfigError("sense: rx noise dimension mismatch");
  std::vector<double> n(z.size());
  rx_noise.sample_into(rng, n);
  for (std::size_t r = 0; r < z.size(); ++r) z[r] += n[r];
  return z;
}

std::vector<double> end_to_end_sample(const std::vector<MixtureVector>& xbar,
                                      const SystemConfig& config, const SensorModel& sensors,
                                      Rng& rng) {
  if (xbar.size() != config.users)
    throw ConfigError("end_to_end_sample: " + std::to_string(xbar.size()) + " mixtures for " +
                      std::to_string(config.users) + " users");
  std::vector<MixtureVector> released;
  released.reserve(xbar.size());
  for (const auto& x : xbar) released.push_back(release(x, config.tx_noise, rng));
  const MixtureVector ybar = propagate_accumulate(released, config.channel);
  const MixtureVector y = channel_noise(ybar, config.channel_noise, rng);
  return sense(y, sensors, config.rx_noise, rng);
}

Matrix simulate_batch(const std::vector<Matrix>& xbar, const SensorModel& sensors,
                      const LinkDraw& draw) {
  Matrix z = sensors.respond_batch(apply_channel(xbar, draw));
  if (!z.same_shape(draw.rx_noise)) throw ConfigError("simulate_batch: rx noise shape mismatch");
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += draw.rx_noise[i];
  return z;
}

Var record_link(Tape& tape, const std::vector<Var>& xbar, const SensorModel& sensors,
                const LinkDraw& draw) {
  Var y = record_channel(tape, xbar, draw);
  return tape.add(sensors.record(tape, y), tape.constant(draw.rx_noise));
}

}  // namespace molmix
