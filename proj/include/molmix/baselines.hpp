#pragma once

// Non-learned transmitters (CSK, GMoSK, greedy max-min alphabets) and the
// Gaussian approximate-maximum-likelihood detector.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "molmix/channel.hpp"
#include "molmix/detector.hpp"
#include "molmix/networks.hpp"
#include "molmix/sensors.hpp"

namespace molmix {

/// A baseline alphabet together with the molecule indices it may use.
struct FixedAlphabet {
  AlphabetTable table;
  std::vector<std::size_t> molecules;
};

/// Four-level CSK on one molecule: levels {0, 1/3, 2/3, 1} * x_max.
FixedAlphabet csk_alphabet(std::size_t molecule_count, double x_max, std::size_t molecule,
                           int symbols = 4);

/// Four-symbol GMoSK on two molecules: on/off patterns (0,0), (0,1), (1,0), (1,1) * x_max.
FixedAlphabet gmosk_alphabet(std::size_t molecule_count, double x_max, std::size_t first,
                             std::size_t second, int symbols = 4);

/// True if no molecule index is used by two different alphabets.
bool molecules_disjoint(const std::vector<FixedAlphabet>& alphabets);

/// The six ways two users can split four molecules 2+2, as
/// (user-1 pair, user-2 pair) with each pair ascending. Ordered by the
/// user-1 pair.
std::vector<std::array<std::array<std::size_t, 2>, 2>> two_user_pair_assignments(
    std::size_t molecule_count);

/// Every (user-1 molecule, user-2 molecule) with distinct members.
std::vector<std::array<std::size_t, 2>> two_user_single_assignments(std::size_t molecule_count);

/// All combinations of `levels` evenly spaced concentrations in [0, x_max]
/// per molecule; the first molecule varies slowest.
Matrix candidate_grid(std::size_t molecule_count, double x_max, int levels = 4);

/// z for the noise-free link: every noise source replaced by its mean.
std::vector<double> noise_free_response(const std::vector<MixtureVector>& xbar,
                                        const SystemConfig& config, const SensorModel& sensors);

/// Greedy max-min selection of `symbols` grid rows for a single user.
///
/// Distances are Euclidean between noise-free sensor outputs, each axis
/// divided by its standard deviation over the grid. Starts from the
/// candidate with the largest output norm; ties go to the lower index.
AlphabetTable mda_build(const Matrix& grid, int symbols, const SystemConfig& config,
                        const SensorModel& sensors);

/// Minimum pairwise standardized distance of a subset of grid rows
/// (standardization uses the whole grid).
double min_standardized_distance(const Matrix& grid, std::span<const std::size_t> subset,
                                 const SystemConfig& config, const SensorModel& sensors);

/// Per symbol-tuple Gaussian approximation of the sensor output.
///
/// Tuples index the joint symbols of all users; user 1 is the most
/// significant digit.
class GaussianSymbolModel {
 public:
  static constexpr double kRegularization = 1e-12;

  GaussianSymbolModel() = default;
  /// Builds the model from moments; covariances are regularized by
  /// kRegularization * tr(C) / R on the diagonal before factorization.
  GaussianSymbolModel(std::vector<std::vector<double>> means, std::vector<Matrix> covariances,
                      std::vector<int> alphabet_sizes, std::size_t samples = 0);

  std::size_t tuple_count() const { return means_.size(); }
  std::size_t dim() const { return means_.empty() ? 0 : means_.front().size(); }
  const std::vector<int>& alphabet_sizes() const { return alphabet_sizes_; }
  const std::vector<double>& mean(std::size_t tuple) const { return means_.at(tuple); }
  /// Empirical (unregularized) covariance.
  const Matrix& covariance(std::size_t tuple) const { return covariances_.at(tuple); }
  std::size_t samples() const { return samples_; }
  /// True when every covariance is zero; detection is then nearest-mean.
  bool degenerate() const { return degenerate_; }

  /// -1/2 (z-mu)^T C^-1 (z-mu) - 1/2 ln det C.
  double log_likelihood(std::size_t tuple, std::span<const double> z) const;

 private:
  std::vector<std::vector<double>> means_;
  std::vector<Matrix> covariances_;
  std::vector<Matrix> cholesky_;  // lower factor of the regularized covariance
  std::vector<double> log_det_;
  std::vector<int> alphabet_sizes_;
  std::size_t samples_ = 0;
  bool degenerate_ = false;
};

/// Monte-Carlo moments of z for every symbol tuple at the configured noise
/// level, `samples` draws each.
GaussianSymbolModel aml_fit(const std::vector<AlphabetTable>& alphabets,
                            const SystemConfig& config, const SensorModel& sensors,
                            std::size_t samples, std::uint64_t seed,
                            const std::optional<HRange>& h_range = std::nullopt);

/// Most likely tuple; ties go to the lowest index.
std::size_t aml_detect(std::span<const double> z, const GaussianSymbolModel& model);

/// Per-user symbols of a tuple index.
std::vector<int> split_tuple(std::size_t tuple, const std::vector<int>& alphabet_sizes);
std::size_t join_tuple(std::span<const int> symbols, const std::vector<int>& alphabet_sizes);

class AmlDetector final : public Detector {
 public:
  explicit AmlDetector(GaussianSymbolModel model) : model_(std::move(model)) {}
  std::size_t users() const override { return model_.alphabet_sizes().size(); }
  std::vector<std::vector<int>> detect(const Matrix& z) const override;
  const GaussianSymbolModel& model() const { return model_; }

 private:
  GaussianSymbolModel model_;
};

}  // namespace molmix
