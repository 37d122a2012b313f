#pragma once

// Monte-Carlo symbol-error-rate estimation, the three experiment sweeps,
// scatter export and the CSV record format.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "molmix/baselines.hpp"
#include "molmix/detector.hpp"
#include "molmix/networks.hpp"
#include "molmix/sensors.hpp"
#include "molmix/training.hpp"

namespace molmix {

inline constexpr double kWilsonZ = 1.959963984540054;

/// Half-width of the 95% Wilson score interval for `errors` out of `trials`.
double wilson_half_width(std::size_t errors, std::size_t trials, double z = kWilsonZ);

/// One evaluation point. Per-user vectors are indexed by 0-based user.
struct SerRecord {
  std::string scheme;
  std::string scenario;
  double nu = 1.0;
  double h_lo = 0.0;
  double h_hi = 0.0;
  double lambda_ratio = 1.0;
  std::vector<double> ser;
  std::vector<double> ser_ci95;
  double sser = 0.0;
  std::size_t trials = 0;
  /// Wilson half-width of the SSER, pooling U * trials decisions.
  double ci95 = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const SerRecord&) const = default;
};

/// Sort key: scenario, scheme, nu, h_lo, h_hi, lambda_ratio.
bool record_less(const SerRecord& a, const SerRecord& b);
void sort_records(std::vector<SerRecord>& records);

inline constexpr const char* kCsvHeader =
    "scheme,scenario,nu,h_lo,h_hi,lambda_ratio,user,ser,sser,trials,ci95,seed";

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// One row per (record, user) with user 1..U, then an aggregate row with
/// user 0 whose ser column holds the SSER.
void write_csv(std::ostream& out, const std::vector<SerRecord>& records);
std::vector<SerRecord> parse_csv(std::istream& in);

/// The attenuation condition of an evaluation point: unset means the
/// system's own channel matrices.
struct EvalPoint {
  double nu = 1.0;
  std::optional<HRange> h;
};

inline constexpr std::size_t kEvalBatch = 4096;

/// Counts symbol errors of `detector` over `trials` independent channel uses
/// with i.i.d. uniform symbols; randomness comes from stream (seed, stream).
/// Only the numeric fields and the seed of the result are filled.
SerRecord estimate_ser(const std::vector<AlphabetTable>& alphabets, const Detector& detector,
                       SystemConfig system, const SensorModel& sensors, const EvalPoint& point,
                       std::size_t trials, std::uint64_t seed, std::uint64_t stream);

/// Knobs shared by the sweeps.
struct SweepSettings {
  std::size_t trials = 100000;
  std::size_t aml_samples = 10000;
  int grid_levels = 4;
  std::uint64_t seed = 1;
};

/// AE and MDA+AML records at every noise level for each trained model,
/// keyed by alphabet size. The baseline's detector is refitted per level.
std::vector<SerRecord> sweep_snr(const SystemConfig& system, const SensorModel& sensors,
                                 const std::map<int, const EndToEndModel*>& models,
                                 const std::vector<double>& nu_grid,
                                 const SweepSettings& settings);

/// The models compared over the attenuation grid for one alphabet size.
struct HSweepModels {
  const EndToEndModel* fixed = nullptr;  // trained at the design attenuation
  const EndToEndModel* limited = nullptr;
  const EndToEndModel* full = nullptr;
};

/// Records for each alphabet size at nu = 1 and each fixed h in `h_grid`:
/// the three AEs plus the MDA+AML baseline designed at `design_h`.
std::vector<SerRecord> sweep_h(const SystemConfig& system, const SensorModel& sensors,
                               const std::map<int, HSweepModels>& models,
                               const std::vector<double>& h_grid, double design_h,
                               const SweepSettings& settings);

/// Baseline transmitter choice made at ratio 1.
struct BaselineChoice {
  std::string scheme;
  std::vector<FixedAlphabet> alphabets;
  double sser_at_unit_ratio = 0.0;
};

/// Searches the molecule assignments of `scheme` ("csk" or "gmosk") for the
/// lowest SSER at equal importance, training a decoder for each candidate.
BaselineChoice select_baseline_assignment(const std::string& scheme, const SystemConfig& system,
                                          const SensorModel& sensors, const TrainConfig& train,
                                          double input_scale, const SweepSettings& settings);

/// AE, CSK and GMoSK records for each importance ratio at nu = 1. One AE per
/// ratio (keyed by ratio); baseline decoders are retrained per ratio.
std::vector<SerRecord> sweep_importance(const SystemConfig& system, const SensorModel& sensors,
                                        const std::map<double, const EndToEndModel*>& models,
                                        const std::vector<double>& ratios,
                                        const TrainConfig& baseline_train, double input_scale,
                                        const SweepSettings& settings);

/// {1, ratio} rescaled to sum to 2.
std::vector<double> importance_for_ratio(double ratio);

/// The 10-point grid 0.005, 0.010, ..., 0.050.
std::vector<double> default_h_grid();
std::vector<double> default_ratio_grid();

// ---------------------------------------------------------------------------

struct ScatterCondition {
  std::string label;
  HRange h;
};

/// 0.02, [0.01, 0.03] and [0.005, 0.05].
std::vector<ScatterCondition> default_scatter_conditions();

struct ScatterPoint {
  std::size_t condition = 0;
  int symbol = 0;
  double h = 0.0;
  std::vector<double> z;
};

/// Gaussian fit of one (symbol, condition) cloud and its coverage region
/// {z : (z-mean)^T C^-1 (z-mean) <= quantile}.
struct EllipseRecord {
  std::size_t condition = 0;
  int symbol = 0;
  std::vector<double> mean;
  Matrix covariance;
  double coverage = 0.95;
  double quantile = 0.0;
};

struct ScatterData {
  std::vector<ScatterCondition> conditions;
  std::vector<ScatterPoint> points;
  std::vector<EllipseRecord> ellipses;
};

/// Chi-square quantile with `dof` degrees of freedom.
double chi_square_quantile(double probability, std::size_t dof);

/// Fits mean and (unbiased) covariance to `samples` rows.
EllipseRecord fit_ellipse(const Matrix& samples, double coverage);

/// Fraction of rows of `samples` inside the ellipse. A zero covariance
/// admits only points equal to the mean.
double ellipse_coverage(const EllipseRecord& ellipse, const Matrix& samples);

/// Sensor outputs of a single-user alphabet at nu = system's level, drawing
/// h per sample from each condition, plus one fitted ellipse per
/// (symbol, condition).
ScatterData export_scatter(const AlphabetTable& alphabet, SystemConfig system,
                           const SensorModel& sensors,
                           const std::vector<ScatterCondition>& conditions,
                           std::size_t samples_per_symbol, std::uint64_t seed,
                           double coverage = 0.95);

void write_scatter_points(std::ostream& out, const ScatterData& data);
void write_scatter_ellipses(std::ostream& out, const ScatterData& data);

}  // namespace molmix
