#pragma once

// Encoder and decoder networks. Symbols are 0-based indices throughout.

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "molmix/channel.hpp"
#include "molmix/diffcore.hpp"
#include "molmix/rng.hpp"

namespace molmix {

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Symbol -> mixture look-up table (one row per symbol).
struct AlphabetTable {
  Matrix mixtures;

  int size() const { return static_cast<int>(mixtures.rows()); }
  std::size_t molecules() const { return mixtures.cols(); }
  MixtureVector mixture(int symbol) const;
  /// Gathers rows for a batch of symbols into a K x S matrix.
  Matrix lookup(std::span<const int> symbols) const;
  /// True if every entry lies in [0, x_max].
  bool feasible(double x_max) const;
  bool operator==(const AlphabetTable&) const = default;
};

inline constexpr int kHiddenWidth = 64;

/// One-hot(N) -> dense(L) -> ReLU -> dense(S) -> x_max * sigmoid.
class EncoderNet {
 public:
  EncoderNet() = default;
  EncoderNet(ParamStore& store, const std::string& prefix, int symbols, std::size_t molecules,
             double x_max, Rng& init_rng, int hidden = kHiddenWidth);

  int symbols() const { return symbols_; }
  std::size_t molecules() const { return molecules_; }
  int hidden() const { return hidden_; }
  double x_max() const { return x_max_; }
  ParamId w1() const { return w1_; }
  ParamId b1() const { return b1_; }
  ParamId w2() const { return w2_; }
  ParamId b2() const { return b2_; }

  /// K x S node of mixtures for a batch of symbols.
  Var record(Tape& tape, std::span<const int> symbols) const;
  MixtureVector encode(const ParamStore& store, int symbol) const;
  AlphabetTable export_alphabet(const ParamStore& store) const;

  static EncoderNet bind(int symbols, std::size_t molecules, double x_max, int hidden,
                         ParamId w1, ParamId b1, ParamId w2, ParamId b2);

 private:
  int symbols_ = 0;
  std::size_t molecules_ = 0;
  int hidden_ = kHiddenWidth;
  double x_max_ = 0.0;
  ParamId w1_, b1_, w2_, b2_;
};

/// z * input_scale -> BatchNorm -> dense(L) -> ReLU -> dense(L) -> ReLU ->
/// dense(N) -> per-user softmax over segments of length N_i.
///
/// input_scale maps the sensor outputs to unit order before normalization.
class DecoderNet {
 public:
  DecoderNet() = default;
  DecoderNet(ParamStore& store, const std::string& prefix, std::size_t sensors,
             std::vector<int> alphabet_sizes, double input_scale, Rng& init_rng,
             int hidden = kHiddenWidth);

  std::size_t sensors() const { return sensors_; }
  const std::vector<int>& alphabet_sizes() const { return alphabet_sizes_; }
  int hidden() const { return hidden_; }
  double input_scale() const { return input_scale_; }
  BatchNormState& norm_state() { return norm_; }
  const BatchNormState& norm_state() const { return norm_; }
  const std::vector<ParamId>& parameter_ids() const { return ids_; }

  /// Per-user K x N_i probability nodes. In train mode the running
  /// statistics are updated only when `update_running` is set.
  std::vector<Var> record(Tape& tape, Var z, NormMode mode, bool update_running);
  /// Eval-mode likelihoods for a K x R batch; one K x N_i matrix per user.
  std::vector<Matrix> decode(const ParamStore& store, const Matrix& z) const;

  static DecoderNet bind(std::size_t sensors, std::vector<int> alphabet_sizes, double input_scale,
                         int hidden, std::vector<ParamId> ids, BatchNormState norm);

 private:
  std::size_t sensors_ = 0;
  std::vector<int> alphabet_sizes_;
  int hidden_ = kHiddenWidth;
  double input_scale_ = 1.0;
  // gamma, beta, w1, b1, w2, b2, w3, b3
  std::vector<ParamId> ids_;
  BatchNormState norm_;
};

/// Index of the largest entry; ties go to the smallest index.
int detect(std::span<const double> likelihoods);

/// A transmitter is either a trainable encoder or a fixed look-up table.
using Transmitter = std::variant<EncoderNet, AlphabetTable>;

/// All transmitters plus the shared decoder and their parameters.
struct EndToEndModel {
  ParamStore params;
  std::vector<Transmitter> transmitters;
  DecoderNet decoder;
  std::uint64_t seed = 0;

  std::size_t users() const { return transmitters.size(); }
  std::vector<AlphabetTable> alphabets() const;
  /// One K x S node per user for the given per-user symbol batches.
  std::vector<Var> record_transmitters(Tape& tape,
                                       const std::vector<std::vector<int>>& symbols) const;
};

/// Encoders for every user plus a decoder, initialized from `seed`.
EndToEndModel make_autoencoder(const SystemConfig& config, double input_scale,
                               std::uint64_t seed);

/// Fixed alphabets for every user plus a trainable decoder.
EndToEndModel make_fixed_transmitter_model(const SystemConfig& config,
                                           std::vector<AlphabetTable> alphabets,
                                           double input_scale, std::uint64_t seed);

}  // namespace molmix
