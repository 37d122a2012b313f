#pragma once

// Reverse-mode differentiation over batched matrices.
//
// A Tape records primitive operations in execution order; every node holds
// its forward value and, after backward(), its adjoint. Parameter leaves are
// bound to entries of a ParamStore and backward() accumulates their
// gradients there. Random draws never enter the tape as random nodes: they
// are sampled beforehand and passed in as constants.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "molmix/matrix.hpp"

namespace molmix {

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const { return id != static_cast<std::size_t>(-1); }
};

/// Handle to a parameter in a ParamStore.
struct ParamId {
  std::size_t index = 0;
  bool operator==(const ParamId&) const = default;
};

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Named trainable tensors plus Adam moment buffers and a shared step counter.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix first_moment;
    Matrix second_moment;
    bool touched = false;
  };

  ParamId add(std::string name, Matrix value);

  Matrix& value(ParamId id) { return entries_.at(id.index).value; }
  const Matrix& value(ParamId id) const { return entries_.at(id.index).value; }
  Matrix& grad(ParamId id) { return entries_.at(id.index).grad; }
  const Matrix& grad(ParamId id) const { return entries_.at(id.index).grad; }
  const std::string& name(ParamId id) const { return entries_.at(id.index).name; }

  std::size_t count() const { return entries_.size(); }
  std::size_t scalar_count() const;
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grad();
  void accumulate_grad(ParamId id, const Matrix& g);

  /// Applies one Adam update with bias correction and advances the step
  /// counter. Parameters that received no gradient since zero_grad() are
  /// updated with a zero gradient.
  void adam_step(double learning_rate);

  std::uint64_t step() const { return step_; }
  const AdamSettings& adam() const { return adam_; }
  void set_adam(const AdamSettings& s) { adam_ = s; }

 private:
  std::vector<Entry> entries_;
  std::uint64_t step_ = 0;
  AdamSettings adam_;
};

/// Running statistics for a batch-normalization layer.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
};

enum class NormMode { kTrain, kEval };

class Tape {
 public:
  explicit Tape(ParamStore* params = nullptr) : source_(params), params_(params) {}
  /// Read-only binding: parameters can be used but receive no gradients.
  explicit Tape(const ParamStore& params) : source_(&params) {}

  Var constant(Matrix value);
  Var param(ParamId id);

  /// x (K x in) * w^T (w: out x in) + b (1 x out), broadcast over rows.
  Var affine(Var x, Var w, Var b);
  Var relu(Var x);
  Var sigmoid(Var x);
  /// scale * sigmoid(x); maps into (0, scale).
  Var scaled_sigmoid(Var x, double scale);
  /// Elementwise max(0, x). Gradient at or below zero is zero.
  Var clip_zero(Var x);
  Var add(Var a, Var b);
  /// Elementwise product with a constant matrix of the same shape.
  Var mul_const(Var a, const Matrix& c);
  Var scale(Var a, double s);
  /// Elementwise max(x, 0)^exponent. The derivative is evaluated at
  /// max(x, floor) for x > 0 and is zero for x <= 0, which bounds it for
  /// exponents below one.
  Var power(Var x, double exponent, double floor);
  /// out(k, r) = sum_m gains(r, m) * x(k, m)^exponents(r, m), with the same
  /// derivative floor as power().
  Var power_law(Var x, const Matrix& gains, const Matrix& exponents, double floor);
  /// Row-wise softmax.
  Var softmax(Var x);
  /// Per-column batch normalization with learned gamma/beta (1 x C each).
  /// Train mode normalizes with batch statistics and, if `update_running`,
  /// folds them into the running statistics. Eval mode uses the running
  /// statistics only.
  Var batchnorm(Var x, Var gamma, Var beta, BatchNormState& state, NormMode mode,
                bool update_running = true);
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var x, std::size_t begin, std::size_t end);
  /// Mean over rows of -log(probs(k, labels[k])): a 1x1 node.
  Var cross_entropy(Var probs, std::span<const int> labels);
  /// Sum of all entries: a 1x1 node.
  Var sum(Var x);

  /// Hash of the active/inactive pattern of every ReLU and clip node. Two
  /// forward passes with equal signatures lie in the same linear region of
  /// the piecewise-linear nodes.
  std::uint64_t kink_signature() const;

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  const Matrix& adjoint(Var v) const { return nodes_.at(v.id).adjoint; }
  std::size_t size() const { return nodes_.size(); }

  /// Propagates d(loss)/d(node) back to every node and accumulates parameter
  /// gradients in the bound ParamStore. `loss` must be 1x1.
  void backward(Var loss);

 private:
  struct Node {
    Matrix value;
    Matrix adjoint;
    std::function<void(Tape&, const Node&)> backprop;
    std::vector<std::size_t> inputs;
    bool is_param = false;
    bool piecewise = false;
    ParamId param;
  };

  Var push(Matrix value, std::vector<std::size_t> inputs,
           std::function<void(Tape&, const Node&)> backprop);
  Matrix& adj(std::size_t id);

  const ParamStore* source_ = nullptr;
  ParamStore* params_ = nullptr;
  std::vector<Node> nodes_;
};

/// Loss value plus the tape's kink signature for one forward pass.
struct LossProbe {
  double loss = 0.0;
  std::uint64_t kink_signature = 0;
};

/// Central finite-difference check of every parameter coordinate.
struct GradCheckResult {
  std::size_t coordinates = 0;
  /// Coordinates whose +-step evaluations fell in a different linear region
  /// of a ReLU/clip node than the base point; excluded from the statistics.
  std::size_t kink_straddles = 0;
  double max_relative_error = 0.0;
  double fraction_below_tight = 0.0;
  /// Per coordinate; negative for excluded coordinates.
  std::vector<double> relative_errors;
};

/// Relative error with an absolute floor on the denominator.
double gradient_relative_error(double analytic, double numeric, double floor = 1e-6);

/// `loss_fn` must rebuild the graph from the current parameter values and
/// return the scalar loss; with `record` true it must also run backward so
/// that the store's gradients are populated.
GradCheckResult finite_difference_check(ParamStore& params,
                                        const std::function<LossProbe(bool record)>& loss_fn,
                                        double step = 1e-4, double tight_tolerance = 1e-4);

}  // namespace molmix
