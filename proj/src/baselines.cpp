#include "molmix/baselines.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "molmix/log.hpp"

namespace molmix {

namespace {

void check_four_symbols(int symbols) {
  if (symbols != 4) throw UsageError("only four-symbol CSK/GMoSK alphabets are defined");
}

}  // namespace

FixedAlphabet csk_alphabet(std::size_t molecule_count, double x_max, std::size_t molecule,
                           int symbols) {
  check_four_symbols(symbols);
  if (molecule >= molecule_count) throw ConfigError("csk: molecule index out of range");
  FixedAlphabet a;
  a.table.mixtures = Matrix(4, molecule_count, 0.0);
  const double levels[] = {0.0, x_max / 3.0, 2.0 * x_max / 3.0, x_max};
  for (std::size_t s = 0; s < 4; ++s) a.table.mixtures(s, molecule) = levels[s];
  a.molecules = {molecule};
  return a;
}

FixedAlphabet gmosk_alphabet(std::size_t molecule_count, double x_max, std::size_t first,
                             std::size_t second, int symbols) {
  check_four_symbols(symbols);
  if (first >= molecule_count || second >= molecule_count || first == second)
    throw ConfigError("gmosk: need two distinct molecule indices in range");
  FixedAlphabet a;
  a.table.mixtures = Matrix(4, molecule_count, 0.0);
  const double on_first[] = {0.0, 0.0, x_max, x_max};
  const double on_second[] = {0.0, x_max, 0.0, x_max};
  for (std::size_t s = 0; s < 4; ++s) {
    a.table.mixtures(s, first) = on_first[s];
    a.table.mixtures(s, second) = on_second[s];
  }
  a.molecules = {first, second};
  return a;
}

bool molecules_disjoint(const std::vector<FixedAlphabet>& alphabets) {
  std::set<std::size_t> seen;
  for (const auto& a : alphabets) {
    std::set<std::size_t> own(a.molecules.begin(), a.molecules.end());
    for (std::size_t m : own)
      if (!seen.insert(m).second) return false;
  }
  return true;
}

std::vector<std::array<std::array<std::size_t, 2>, 2>> two_user_pair_assignments(
    std::size_t molecule_count) {
  if (molecule_count != 4) throw UsageError("pair assignments are defined for four molecules");
  std::vector<std::array<std::array<std::size_t, 2>, 2>> out;
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = a + 1; b < 4; ++b) {
      std::array<std::size_t, 2> rest{};
      std::size_t n = 0;
      for (std::size_t m = 0; m < 4; ++m)
        if (m != a && m != b) rest[n++] = m;
      out.push_back({{{a, b}, rest}});
    }
  return out;
}

std::vector<std::array<std::size_t, 2>> two_user_single_assignments(std::size_t molecule_count) {
  std::vector<std::array<std::size_t, 2>> out;
  for (std::size_t a = 0; a < molecule_count; ++a)
    for (std::size_t b = 0; b < molecule_count; ++b)
      if (a != b) out.push_back({a, b});
  return out;
}

Matrix candidate_grid(std::size_t molecule_count, double x_max, int levels) {
  if (levels < 2) throw ConfigError("candidate grid needs at least two levels");
  std::size_t count = 1;
  for (std::size_t m = 0; m < molecule_count; ++m) count *= static_cast<std::size_t>(levels);
  Matrix grid(count, molecule_count);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t rest = i;
    for (std::size_t m = molecule_count; m-- > 0;) {
      const auto level = static_cast<double>(rest % static_cast<std::size_t>(levels));
      rest /= static_cast<std::size_t>(levels);
      grid(i, m) = x_max * level / static_cast<double>(levels - 1);
    }
  }
  return grid;
}

std::vector<double> noise_free_response(const std::vector<MixtureVector>& xbar,
                                        const SystemConfig& config, const SensorModel& sensors) {
  std::vector<MixtureVector> released;
  for (const auto& x : xbar) {
    MixtureVector r(x.size());
    for (std::size_t l = 0; l < x.size(); ++l) r[l] = std::max(0.0, x[l] + config.tx_noise.mean[l]);
    released.push_back(std::move(r));
  }
  MixtureVector y = propagate_accumulate(released, config.channel);
  for (std::size_t l = 0; l < y.size(); ++l) y[l] = std::max(0.0, y[l] + config.channel_noise.mean[l]);
  std::vector<double> z = sensors.respond(y);
  for (std::size_t r = 0; r < z.size(); ++r) z[r] += config.rx_noise.mean[r];
  return z;
}

namespace {

Matrix standardized_outputs(const Matrix& grid, const SystemConfig& config,
                            const SensorModel& sensors, Matrix* raw_out = nullptr) {
  if (config.users != 1) throw UsageError("mda: defined for a single user");
  const std::size_t G = grid.rows(), R = sensors.sensor_count();
  Matrix raw(G, R);
  for (std::size_t g = 0; g < G; ++g) {
    auto row = grid.row_span(g);
    const auto z = noise_free_response({MixtureVector(row.begin(), row.end())}, config, sensors);
    std::copy(z.begin(), z.end(), raw.row_span(g).begin());
  }
  Matrix out = raw;
  for (std::size_t r = 0; r < R; ++r) {
    double mean = 0.0;
    for (std::size_t g = 0; g < G; ++g) mean += raw(g, r);
    mean /= static_cast<double>(G);
    double var = 0.0;
    for (std::size_t g = 0; g < G; ++g) var += (raw(g, r) - mean) * (raw(g, r) - mean);
    const double sd = std::sqrt(var / static_cast<double>(G));
    const double scale = sd > 0.0 ? 1.0 / sd : 1.0;
    for (std::size_t g = 0; g < G; ++g) out(g, r) = raw(g, r) * scale;
  }
  if (raw_out) *raw_out = std::move(raw);
  return out;
}

double row_distance(const Matrix& m, std::size_t a, std::size_t b) {
  double d = 0.0;
  for (std::size_t c = 0; c < m.cols(); ++c) d += (m(a, c) - m(b, c)) * (m(a, c) - m(b, c));
  return std::sqrt(d);
}

}  // namespace

AlphabetTable mda_build(const Matrix& grid, int symbols, const SystemConfig& config,
                        const SensorModel& sensors) {
  const std::size_t G = grid.rows();
  if (symbols < 1 || static_cast<std::size_t>(symbols) > G)
    throw UsageError("mda: alphabet size " + std::to_string(symbols) + " exceeds grid size " +
                     std::to_string(G));
  Matrix raw;
  const Matrix z = standardized_outputs(grid, config, sensors, &raw);

  std::size_t first = 0;
  double best_norm = -1.0;
  for (std::size_t g = 0; g < G; ++g) {
    double n = 0.0;
    for (double v : raw.row_span(g)) n += v * v;
    if (n > best_norm) {
      best_norm = n;
      first = g;
    }
  }
  std::vector<std::size_t> chosen{first};
  std::vector<double> nearest(G, std::numeric_limits<double>::infinity());
  std::vector<bool> used(G, false);
  used[first] = true;
  while (chosen.size() < static_cast<std::size_t>(symbols)) {
    const std::size_t last = chosen.back();
    std::size_t pick = G;
    double pick_dist = -1.0;
    for (std::size_t g = 0; g < G; ++g) {
      if (used[g]) continue;
      nearest[g] = std::min(nearest[g], row_distance(z, g, last));
      if (nearest[g] > pick_dist) {
        pick_dist = nearest[g];
        pick = g;
      }
    }
    used[pick] = true;
    chosen.push_back(pick);
  }
  AlphabetTable table{Matrix(chosen.size(), grid.cols())};
  for (std::size_t s = 0; s < chosen.size(); ++s) {
    auto src = grid.row_span(chosen[s]);
    std::copy(src.begin(), src.end(), table.mixtures.row_span(s).begin());
  }
  return table;
}

double min_standardized_distance(const Matrix& grid, std::span<const std::size_t> subset,
                                 const SystemConfig& config, const SensorModel& sensors) {
  const Matrix z = standardized_outputs(grid, config, sensors);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < subset.size(); ++i)
    for (std::size_t j = i + 1; j < subset.size(); ++j)
      best = std::min(best, row_distance(z, subset[i], subset[j]));
  return best;
}

// ---------------------------------------------------------------------------

GaussianSymbolModel::GaussianSymbolModel(std::vector<std::vector<double>> means,
                                         std::vector<Matrix> covariances,
                                         std::vector<int> alphabet_sizes, std::size_t samples)
    : means_(std::move(means)),
      covariances_(std::move(covariances)),
      alphabet_sizes_(std::move(alphabet_sizes)),
      samples_(samples) {
  if (means_.empty() || means_.size() != covariances_.size())
    throw ConfigError("gaussian model: need one mean and covariance per tuple");
  std::size_t tuples = 1;
  for (int n : alphabet_sizes_) tuples *= static_cast<std::size_t>(n);
  if (tuples != means_.size())
    throw ConfigError("gaussian model: " + std::to_string(means_.size()) + " tuples for " +
                      std::to_string(tuples) + " symbol combinations");
  const std::size_t R = means_.front().size();
  double trace_sum = 0.0;
  for (std::size_t t = 0; t < means_.size(); ++t) {
    if (means_[t].size() != R || covariances_[t].rows() != R || covariances_[t].cols() != R)
      throw ConfigError("gaussian model: inconsistent dimensions");
    for (std::size_t r = 0; r < R; ++r) trace_sum += covariances_[t](r, r);
  }
  degenerate_ = trace_sum == 0.0;
  if (degenerate_) {
    log_warning("gaussian model: all covariances are zero, using nearest-mean detection");
    return;
  }
  const double fallback = kRegularization * trace_sum / static_cast<double>(means_.size() * R);
  for (std::size_t t = 0; t < means_.size(); ++t) {
    const Matrix& c = covariances_[t];
    Eigen::MatrixXd m(R, R);
    double trace = 0.0;
    for (std::size_t i = 0; i < R; ++i) {
      trace += c(i, i);
      for (std::size_t j = 0; j < R; ++j) m(i, j) = 0.5 * (c(i, j) + c(j, i));
    }
    double ridge = kRegularization * trace / static_cast<double>(R);
    if (ridge == 0.0) ridge = fallback;
    m.diagonal().array() += ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
      log_warning("gaussian model: covariance of tuple " + std::to_string(t) +
                  " is not positive definite after regularization; inflating ridge");
      m.diagonal().array() += trace / static_cast<double>(R) * 1e-6 + ridge;
      llt.compute(m);
      if (llt.info() != Eigen::Success) throw EvaluationError("gaussian model: factorization failed");
    }
    const Eigen::MatrixXd L = llt.matrixL();
    Matrix lower(R, R);
    double log_det = 0.0;
    for (std::size_t i = 0; i < R; ++i) {
      log_det += 2.0 * std::log(L(i, i));
      for (std::size_t j = 0; j <= i; ++j) lower(i, j) = L(i, j);
    }
    cholesky_.push_back(std::move(lower));
    log_det_.push_back(log_det);
  }
}

double GaussianSymbolModel::log_likelihood(std::size_t tuple, std::span<const double> z) const {
  const auto& mu = means_.at(tuple);
  const std::size_t R = mu.size();
  if (z.size() != R) throw EvaluationError("aml: observation dimension mismatch");
  if (degenerate_) {
    double d = 0.0;
    for (std::size_t r = 0; r < R; ++r) d += (z[r] - mu[r]) * (z[r] - mu[r]);
    return -0.5 * d;
  }
  // Forward substitution: L w = z - mu, quadratic form = |w|^2.
  const Matrix& L = cholesky_[tuple];
  double w[16];
  std::vector<double> heap;
  double* ws = w;
  if (R > 16) {
    heap.resize(R);
    ws = heap.data();
  }
  double quad = 0.0;
  for (std::size_t i = 0; i < R; ++i) {
    double acc = z[i] - mu[i];
    for (std::size_t j = 0; j < i; ++j) acc -= L(i, j) * ws[j];
    ws[i] = acc / L(i, i);
    quad += ws[i] * ws[i];
  }
  return -0.5 * quad - 0.5 * log_det_[tuple];
}

std::vector<int> split_tuple(std::size_t tuple, const std::vector<int>& alphabet_sizes) {
  std::vector<int> out(alphabet_sizes.size());
  for (std::size_t i = alphabet_sizes.size(); i-- > 0;) {
    const auto n = static_cast<std::size_t>(alphabet_sizes[i]);
    out[i] = static_cast<int>(tuple % n);
    tuple /= n;
  }
  return out;
}

std::size_t join_tuple(std::span<const int> symbols, const std::vector<int>& alphabet_sizes) {
  std::size_t t = 0;
  for (std::size_t i = 0; i < alphabet_sizes.size(); ++i)
    t = t * static_cast<std::size_t>(alphabet_sizes[i]) + static_cast<std::size_t>(symbols[i]);
  return t;
}

GaussianSymbolModel aml_fit(const std::vector<AlphabetTable>& alphabets,
                            const SystemConfig& config, const SensorModel& sensors,
                            std::size_t samples, std::uint64_t seed,
                            const std::optional<HRange>& h_range) {
  if (alphabets.size() != config.users) throw ConfigError("aml_fit: one alphabet per user required");
  if (samples < 2) throw ConfigError("aml_fit: need at least two samples per tuple");
  std::vector<int> sizes;
  for (const auto& a : alphabets) sizes.push_back(a.size());
  std::size_t tuples = 1;
  for (int n : sizes) tuples *= static_cast<std::size_t>(n);
  const std::size_t R = sensors.sensor_count();

  std::vector<std::vector<double>> means;
  std::vector<Matrix> covs;
  SystemConfig local = config;
  for (std::size_t t = 0; t < tuples; ++t) {
    const auto symbols = split_tuple(t, sizes);
    std::vector<MixtureVector> xbar;
    for (std::size_t i = 0; i < alphabets.size(); ++i) xbar.push_back(alphabets[i].mixture(symbols[i]));
    Rng rng = make_stream(seed, t);
    std::vector<double> mean(R, 0.0);
    Matrix m2(R, R, 0.0);
    for (std::size_t n = 1; n <= samples; ++n) {
      if (h_range) {
        for (auto& diagonal : local.channel.diagonals) {
          const double h = h_range->fixed() ? h_range->lo : uniform(rng, h_range->lo, h_range->hi);
          std::fill(diagonal.begin(), diagonal.end(), h);
        }
      }
      const auto z = end_to_end_sample(xbar, local, sensors, rng);
      // Welford update; exact for constant streams.
      std::vector<double> delta(R);
      for (std::size_t r = 0; r < R; ++r) {
        delta[r] = z[r] - mean[r];
        mean[r] += delta[r] / static_cast<double>(n);
      }
      for (std::size_t a = 0; a < R; ++a)
        for (std::size_t b = 0; b < R; ++b) m2(a, b) += delta[a] * (z[b] - mean[b]);
    }
    for (auto& v : m2.data()) v /= static_cast<double>(samples - 1);
    means.push_back(std::move(mean));
    covs.push_back(std::move(m2));
  }
  return GaussianSymbolModel(std::move(means), std::move(covs), std::move(sizes), samples);
}

std::size_t aml_detect(std::span<const double> z, const GaussianSymbolModel& model) {
  std::size_t best = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < model.tuple_count(); ++t) {
    const double ll = model.log_likelihood(t, z);
    if (ll > best_ll) {
      best_ll = ll;
      best = t;
    }
  }
  return best;
}

std::vector<std::vector<int>> AmlDetector::detect(const Matrix& z) const {
  const auto& sizes = model_.alphabet_sizes();
  std::vector<std::vector<int>> out(sizes.size(), std::vector<int>(z.rows()));
  for (std::size_t k = 0; k < z.rows(); ++k) {
    const auto symbols = split_tuple(aml_detect(z.row_span(k), model_), sizes);
    for (std::size_t i = 0; i < sizes.size(); ++i) out[i][k] = symbols[i];
  }
  return out;
}

}  // namespace molmix
