#include "molmix/channel.hpp"

#include <cmath>
#include <string>

namespace molmix {

NoiseSpec NoiseSpec::isotropic(std::size_t dim, double mean, double variance, double nu) {
  return NoiseSpec{std::vector<double>(dim, mean), std::vector<double>(dim, variance), nu};
}

double NoiseSpec::stddev(std::size_t axis) const { return std::sqrt(nu * variance.at(axis)); }

void NoiseSpec::validate(std::size_t expected_dim, const char* what) const {
  if (mean.size() != expected_dim || variance.size() != expected_dim) {
    throw ConfigError(std::string(what) + ": expected dimension " +
                      std::to_string(expected_dim) + ", got mean " +
                      std::to_string(mean.size()) + " / variance " +
                      std::to_string(variance.size()));
  }
  for (double v : variance)
    if (!(v >= 0.0)) throw ConfigError(std::string(what) + ": negative variance");
  if (!(nu >= 0.0)) throw ConfigError(std::string(what) + ": negative noise multiplier");
}

void NoiseSpec::sample_into(Rng& rng, std::span<double> out) const {
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = mean[i] + std::sqrt(nu * variance[i]) * standard_normal(rng);
}

std::vector<double> NoiseSpec::sample(Rng& rng) const {
  std::vector<double> out(dim());
  sample_into(rng, out);
  return out;
}

ChannelMatrixSet ChannelMatrixSet::uniform(std::size_t users, std::size_t molecules, double h) {
  return ChannelMatrixSet{std::vector<std::vector<double>>(users, std::vector<double>(molecules, h))};
}

void ChannelMatrixSet::validate(std::size_t users, std::size_t molecules) const {
  if (diagonals.size() != users)
    throw ConfigError("channel: " + std::to_string(diagonals.size()) +
                      " attenuation vectors for " + std::to_string(users) + " users");
  for (const auto& d : diagonals) {
    if (d.size() != molecules)
      throw ConfigError("channel: attenuation vector of length " + std::to_string(d.size()) +
                        ", expected " + std::to_string(molecules));
    for (double h : d)
      if (!(h >= 0.0)) throw ConfigError("channel: negative attenuation");
  }
}

void HRange::validate() const {
  if (!(lo > 0.0) || !(hi >= lo))
    throw ConfigError("attenuation range must satisfy 0 < h_min <= h_max");
}

void SystemConfig::validate() const {
  if (users < 1) throw ConfigError("system: need at least one user");
  if (molecules < 1 || sensors < 1) throw ConfigError("system: S and R must be >= 1");
  if (alphabet_sizes.size() != users)
    throw ConfigError("system: " + std::to_string(alphabet_sizes.size()) +
                      " alphabet sizes for " + std::to_string(users) + " users");
  for (int n : alphabet_sizes)
    if (n < 2) throw ConfigError("system: alphabet sizes must be >= 2");
  if (!(x_max > 0.0)) throw ConfigError("system: x_max must be positive");
  channel.validate(users, molecules);
  tx_noise.validate(molecules, "tx_noise");
  channel_noise.validate(molecules, "channel_noise");
  rx_noise.validate(sensors, "rx_noise");
  for (double nu : nu_levels)
    if (!(nu >= 0.0)) throw ConfigError("system: negative noise level in schedule");
}

void SystemConfig::set_nu(double nu) {
  tx_noise.nu = nu;
  channel_noise.nu = nu;
  rx_noise.nu = nu;
}

int SystemConfig::total_symbols() const {
  int n = 0;
  for (int a : alphabet_sizes) n += a;
  return n;
}

std::size_t SystemConfig::tuple_count() const {
  std::size_t n = 1;
  for (int a : alphabet_sizes) n *= static_cast<std::size_t>(a);
  return n;
}

std::vector<double> default_nu_levels() {
  std::vector<double> levels;
  for (int l = -5; l <= 5; ++l) levels.push_back(std::pow(10.0, l / 5.0));
  return levels;
}

MixtureVector release(std::span<const double> xbar, const NoiseSpec& tx_noise, Rng& rng) {
  if (xbar.size() != tx_noise.dim())
    throw ConfigError("release: mixture length " + std::to_string(xbar.size()) +
                      " vs noise dimension " + std::to_string(tx_noise.dim()));
  MixtureVector x(xbar.size());
  tx_noise.sample_into(rng, x);
  for (std::size_t l = 0; l < x.size(); ++l) x[l] = std::max(0.0, xbar[l] + x[l]);
  return x;
}

MixtureVector propagate_accumulate(const std::vector<MixtureVector>& released,
                                   const ChannelMatrixSet& channel) {
  if (released.empty()) throw ConfigError("propagate: no users");
  if (released.size() != channel.users())
    throw ConfigError("propagate: " + std::to_string(released.size()) + " mixtures for " +
                      std::to_string(channel.users()) + " channel matrices");
  const std::size_t S = released.front().size();
  MixtureVector ybar(S, 0.0);
  for (std::size_t i = 0; i < released.size(); ++i) {
    if (released[i].size() != S || channel.diagonals[i].size() != S)
      throw ConfigError("propagate: dimension mismatch for user " + std::to_string(i + 1));
    for (std::size_t l = 0; l < S; ++l) ybar[l] += channel.diagonals[i][l] * released[i][l];
  }
  return ybar;
}

MixtureVector channel_noise(std::span<const double> ybar, const NoiseSpec& noise, Rng& rng) {
  if (ybar.size() != noise.dim())
    throw ConfigError("channel_noise: dimension mismatch");
  MixtureVector y(ybar.size());
  noise.sample_into(rng, y);
  for (std::size_t l = 0; l < y.size(); ++l) y[l] = std::max(0.0, ybar[l] + y[l]);
  return y;
}

LinkDraw draw_link(const SystemConfig& config, std::size_t batch,
                   const std::optional<HRange>& h_range, Rng& rng) {
  const std::size_t S = config.molecules, R = config.sensors, U = config.users;
  LinkDraw d;
  for (std::size_t i = 0; i < U; ++i) {
    Matrix n(batch, S);
    for (std::size_t k = 0; k < batch; ++k) config.tx_noise.sample_into(rng, n.row_span(k));
    d.tx_noise.push_back(std::move(n));
  }
  for (std::size_t i = 0; i < U; ++i) {
    Matrix h(batch, S);
    for (std::size_t k = 0; k < batch; ++k) {
      if (h_range && !h_range->fixed()) {
        const double draw = uniform(rng, h_range->lo, h_range->hi);
        for (std::size_t l = 0; l < S; ++l) h(k, l) = draw;
      } else if (h_range) {
        for (std::size_t l = 0; l < S; ++l) h(k, l) = h_range->lo;
      } else {
        for (std::size_t l = 0; l < S; ++l) h(k, l) = config.channel.diagonals[i][l];
      }
    }
    d.attenuation.push_back(std::move(h));
  }
  d.channel_noise = Matrix(batch, S);
  for (std::size_t k = 0; k < batch; ++k)
    config.channel_noise.sample_into(rng, d.channel_noise.row_span(k));
  d.rx_noise = Matrix(batch, R);
  for (std::size_t k = 0; k < batch; ++k) config.rx_noise.sample_into(rng, d.rx_noise.row_span(k));
  return d;
}

Var record_channel(Tape& tape, const std::vector<Var>& xbar, const LinkDraw& draw) {
  if (xbar.size() != draw.tx_noise.size())
    throw ConfigError("record_channel: " + std::to_string(xbar.size()) + " users vs " +
                      std::to_string(draw.tx_noise.size()) + " noise draws");
  Var ybar;
  for (std::size_t i = 0; i < xbar.size(); ++i) {
    Var x = tape.clip_zero(tape.add(xbar[i], tape.constant(draw.tx_noise[i])));
    Var yi = tape.mul_const(x, draw.attenuation[i]);
    ybar = ybar.valid() ? tape.add(ybar, yi) : yi;
  }
  return tape.clip_zero(tape.add(ybar, tape.constant(draw.channel_noise)));
}

Matrix apply_channel(const std::vector<Matrix>& xbar, const LinkDraw& draw) {
  if (xbar.size() != draw.tx_noise.size())
    throw ConfigError("apply_channel: user count mismatch");
  const std::size_t K = draw.batch();
  const std::size_t S = draw.channel_noise.cols();
  Matrix y(K, S, 0.0);
  for (std::size_t i = 0; i < xbar.size(); ++i) {
    if (xbar[i].rows() != K || xbar[i].cols() != S)
      throw ConfigError("apply_channel: mixture batch " + shape_string(xbar[i]) +
                        " does not match draw " + std::to_string(K) + "x" + std::to_string(S));
    for (std::size_t j = 0; j < y.size(); ++j)
      y[j] += draw.attenuation[i][j] * std::max(0.0, xbar[i][j] + draw.tx_noise[i][j]);
  }
  for (std::size_t j = 0; j < y.size(); ++j) y[j] = std::max(0.0, y[j] + draw.channel_noise[j]);
  return y;
}

}  // namespace molmix
