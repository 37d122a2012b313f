#include "molmix/diffcore.hpp"

#include <algorithm>
#include <cmath>

#include "molmix/log.hpp"

namespace molmix {

// ---------------------------------------------------------------------------
// ParamStore

ParamId ParamStore::add(std::string name, Matrix value) {
  Entry e;
  e.name = std::move(name);
  e.grad = Matrix(value.rows(), value.cols());
  e.first_moment = Matrix(value.rows(), value.cols());
  e.second_moment = Matrix(value.rows(), value.cols());
  e.value = std::move(value);
  entries_.push_back(std::move(e));
  return ParamId{entries_.size() - 1};
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) {
    e.grad.fill(0.0);
    e.touched = false;
  }
}

void ParamStore::accumulate_grad(ParamId id, const Matrix& g) {
  auto& e = entries_.at(id.index);
  if (!e.grad.same_shape(g)) {
    throw ConfigError("gradient shape " + shape_string(g) + " does not match parameter '" +
                      e.name + "' of shape " + shape_string(e.value));
  }
  for (std::size_t i = 0; i < g.size(); ++i) e.grad[i] += g[i];
  e.touched = true;
}

void ParamStore::adam_step(double learning_rate) {
  ++step_;
  const double t = static_cast<double>(step_);
  const double bias1 = 1.0 - std::pow(adam_.beta1, t);
  const double bias2 = 1.0 - std::pow(adam_.beta2, t);
  for (auto& e : entries_) {
    if (!e.touched) log_debug("adam: parameter '" + e.name + "' has no gradient, using zero");
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      double& m = e.first_moment[i];
      double& v = e.second_moment[i];
      m = adam_.beta1 * m + (1.0 - adam_.beta1) * g;
      v = adam_.beta2 * v + (1.0 - adam_.beta2) * g * g;
      const double m_hat = m / bias1;
      const double v_hat = v / bias2;
      e.value[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + adam_.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Tape

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

double sigmoid_of(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::push(Matrix value, std::vector<std::size_t> inputs,
               std::function<void(Tape&, const Node&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Matrix& Tape::adj(std::size_t id) {
  Node& n = nodes_[id];
  if (n.adjoint.empty() && !n.value.empty()) n.adjoint = Matrix(n.value.rows(), n.value.cols());
  return n.adjoint;
}

Var Tape::constant(Matrix value) { return push(std::move(value), {}, nullptr); }

Var Tape::param(ParamId id) {
  if (source_ == nullptr) throw UsageError("tape has no parameter store bound");
  Var v = push(source_->value(id), {}, nullptr);
  nodes_[v.id].is_param = true;
  nodes_[v.id].param = id;
  return v;
}

Var Tape::affine(Var x, Var w, Var b) {
  const Matrix& X = value(x);
  const Matrix& W = value(w);
  const Matrix& B = value(b);
  require(X.cols() == W.cols(), "affine: input width " + std::to_string(X.cols()) +
                                    " does not match weight " + shape_string(W));
  require(B.rows() == 1 && B.cols() == W.rows(),
          "affine: bias " + shape_string(B) + " does not match weight " + shape_string(W));
  const std::size_t K = X.rows(), in = X.cols(), out = W.rows();
  Matrix Y(K, out);
  for (std::size_t k = 0; k < K; ++k) {
    const double* xr = &X.data()[k * in];
    for (std::size_t o = 0; o < out; ++o) {
      const double* wr = &W.data()[o * in];
      double acc = B[o];
      for (std::size_t j = 0; j < in; ++j) acc += xr[j] * wr[j];
      Y(k, o) = acc;
    }
  }
  const std::size_t xi = x.id, wi = w.id, bi = b.id;
  return push(std::move(Y), {xi, wi, bi}, [xi, wi, bi, K, in, out](Tape& t, const Node& self) {
    const Matrix& G = self.adjoint;
    const Matrix& Xv = t.nodes_[xi].value;
    const Matrix& Wv = t.nodes_[wi].value;
    Matrix& gx = t.adj(xi);
    Matrix& gw = t.adj(wi);
    Matrix& gb = t.adj(bi);
    for (std::size_t k = 0; k < K; ++k) {
      const double* xr = &Xv.data()[k * in];
      double* gxr = &gx.data()[k * in];
      for (std::size_t o = 0; o < out; ++o) {
        const double g = G(k, o);
        if (g == 0.0) continue;
        gb[o] += g;
        const double* wr = &Wv.data()[o * in];
        double* gwr = &gw.data()[o * in];
        for (std::size_t j = 0; j < in; ++j) {
          gxr[j] += g * wr[j];
          gwr[j] += g * xr[j];
        }
      }
    }
  });
}

Var Tape::relu(Var x) {
  Matrix Y = value(x);
  for (auto& v : Y.data()) v = v > 0.0 ? v : 0.0;
  const std::size_t xi = x.id;
  Var out = push(std::move(Y), {xi}, [xi](Tape& t, const Node& self) {
    Matrix& gx = t.adj(xi);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (self.value[i] > 0.0) gx[i] += self.adjoint[i];
  });
  nodes_[out.id].piecewise = true;
  return out;
}

Var Tape::clip_zero(Var x) {
  // Same map as relu; kept separate so channel rectification reads as such.
  return relu(x);
}

Var Tape::sigmoid(Var x) { return scaled_sigmoid(x, 1.0); }

Var Tape::scaled_sigmoid(Var x, double scale) {
  Matrix Y = value(x);
  for (auto& v : Y.data()) v = scale * sigmoid_of(v);
  const std::size_t xi = x.id;
  return push(std::move(Y), {xi}, [xi, scale](Tape& t, const Node& self) {
    Matrix& gx = t.adj(xi);
    const Matrix& X = t.nodes_[xi].value;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double s = sigmoid_of(X[i]);
      gx[i] += self.adjoint[i] * scale * s * (1.0 - s);
    }
  });
}

Var Tape::add(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.same_shape(B), "add: shape " + shape_string(A) + " vs " + shape_string(B));
  Matrix Y = A;
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] += B[i];
  const std::size_t ai = a.id, bi = b.id;
  return push(std::move(Y), {ai, bi}, [ai, bi](Tape& t, const Node& self) {
    Matrix& ga = t.adj(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.adjoint[i];
    Matrix& gb = t.adj(bi);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.adjoint[i];
  });
}

Var Tape::mul_const(Var a, const Matrix& c) {
  const Matrix& A = value(a);
  require(A.same_shape(c), "mul_const: shape " + shape_string(A) + " vs " + shape_string(c));
  Matrix Y = A;
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] *= c[i];
  const std::size_t ai = a.id;
  return push(std::move(Y), {ai}, [ai, c](Tape& t, const Node& self) {
    Matrix& ga = t.adj(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.adjoint[i] * c[i];
  });
}

Var Tape::scale(Var a, double s) {
  Matrix Y = value(a);
  for (auto& v : Y.data()) v *= s;
  const std::size_t ai = a.id;
  return push(std::move(Y), {ai}, [ai, s](Tape& t, const Node& self) {
    Matrix& ga = t.adj(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.adjoint[i] * s;
  });
}

Var Tape::power(Var x, double exponent, double floor) {
  Matrix Y = value(x);
  for (auto& v : Y.data()) v = std::pow(std::max(v, 0.0), exponent);
  const std::size_t xi = x.id;
  return push(std::move(Y), {xi}, [xi, exponent, floor](Tape& t, const Node& self) {
    Matrix& gx = t.adj(xi);
    const Matrix& X = t.nodes_[xi].value;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (X[i] <= 0.0) continue;
      gx[i] += self.adjoint[i] * exponent * std::pow(std::max(X[i], floor), exponent - 1.0);
    }
  });
}

Var Tape::power_law(Var x, const Matrix& gains, const Matrix& exponents, double floor) {
  const Matrix& X = value(x);
  require(gains.same_shape(exponents), "power_law: gains " + shape_string(gains) +
                                           " vs exponents " + shape_string(exponents));
  require(X.cols() == gains.cols(), "power_law: input width " + std::to_string(X.cols()) +
                                        " does not match gains " + shape_string(gains));
  const std::size_t K = X.rows(), S = X.cols(), R = gains.rows();
  Matrix Y(K, R);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t r = 0; r < R; ++r) {
      double acc = 0.0;
      for (std::size_t m = 0; m < S; ++m)
        acc += gains(r, m) * std::pow(std::max(X(k, m), 0.0), exponents(r, m));
      Y(k, r) = acc;
    }
  const std::size_t xi = x.id;
  return push(std::move(Y), {xi},
              [xi, gains, exponents, floor, K, S, R](Tape& t, const Node& self) {
                Matrix& gx = t.adj(xi);
                const Matrix& Xv = t.nodes_[xi].value;
                for (std::size_t k = 0; k < K; ++k)
                  for (std::size_t m = 0; m < S; ++m) {
                    if (Xv(k, m) <= 0.0) continue;
                    const double y = std::max(Xv(k, m), floor);
                    double acc = 0.0;
                    for (std::size_t r = 0; r < R; ++r) {
                      const double b = exponents(r, m);
                      acc += self.adjoint(k, r) * gains(r, m) * b * std::pow(y, b - 1.0);
                    }
                    gx(k, m) += acc;
                  }
              });
}

Var Tape::softmax(Var x) {
  Matrix Y = value(x);
  const std::size_t K = Y.rows(), C = Y.cols();
  for (std::size_t k = 0; k < K; ++k) {
    auto row = Y.row_span(k);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (auto& v : row) {
      v = std::exp(v - mx);
      total += v;
    }
    for (auto& v : row) v /= total;
  }
  const std::size_t xi = x.id;
  return push(std::move(Y), {xi}, [xi, K, C](Tape& t, const Node& self) {
    Matrix& gx = t.adj(xi);
    for (std::size_t k = 0; k < K; ++k) {
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += self.adjoint(k, c) * self.value(k, c);
      for (std::size_t c = 0; c < C; ++c)
        gx(k, c) += self.value(k, c) * (self.adjoint(k, c) - dot);
    }
  });
}

Var Tape::batchnorm(Var x, Var gamma, Var beta, BatchNormState& state, NormMode mode,
                    bool update_running) {
  const Matrix& X = value(x);
  const Matrix& G = value(gamma);
  const Matrix& B = value(beta);
  const std::size_t K = X.rows(), C = X.cols();
  require(G.rows() == 1 && G.cols() == C && B.same_shape(G),
          "batchnorm: gamma/beta must be 1x" + std::to_string(C));
  const double eps = state.epsilon;

  std::vector<double> mean(C, 0.0), var(C, 0.0);
  if (mode == NormMode::kEval) {
    require(state.running_mean.size() == C && state.running_var.size() == C,
            "batchnorm: running statistics width mismatch");
    mean = state.running_mean;
    var = state.running_var;
  } else {
    if (K < 2) throw UsageError("batchnorm: train mode needs a batch of at least 2");
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t c = 0; c < C; ++c) mean[c] += X(k, c);
    for (auto& m : mean) m /= static_cast<double>(K);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t c = 0; c < C; ++c) {
        const double d = X(k, c) - mean[c];
        var[c] += d * d;
      }
    for (auto& v : var) v /= static_cast<double>(K);
    if (update_running) {
      if (state.running_mean.size() != C) {
        state.running_mean.assign(C, 0.0);
        state.running_var.assign(C, 1.0);
      }
      const double unbias = static_cast<double>(K) / static_cast<double>(K - 1);
      for (std::size_t c = 0; c < C; ++c) {
        state.running_mean[c] =
            (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean[c];
        state.running_var[c] =
            (1.0 - state.momentum) * state.running_var[c] + state.momentum * var[c] * unbias;
      }
    }
  }

  std::vector<double> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  Matrix xhat(K, C), Y(K, C);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t c = 0; c < C; ++c) {
      xhat(k, c) = (X(k, c) - mean[c]) * inv_std[c];
      Y(k, c) = G[c] * xhat(k, c) + B[c];
    }

  const std::size_t xi = x.id, gi = gamma.id, bi = beta.id;
  const bool batch_stats = mode == NormMode::kTrain;
  return push(std::move(Y), {xi, gi, bi},
              [xi, gi, bi, K, C, batch_stats, xhat = std::move(xhat),
               inv_std = std::move(inv_std)](Tape& t, const Node& self) {
                const Matrix& Gv = t.nodes_[gi].value;
                Matrix& gx = t.adj(xi);
                Matrix& gg = t.adj(gi);
                Matrix& gb = t.adj(bi);
                const Matrix& dy = self.adjoint;
                for (std::size_t c = 0; c < C; ++c) {
                  double sum_dy = 0.0, sum_dy_xhat = 0.0;
                  for (std::size_t k = 0; k < K; ++k) {
                    sum_dy += dy(k, c);
                    sum_dy_xhat += dy(k, c) * xhat(k, c);
                  }
                  gb[c] += sum_dy;
                  gg[c] += sum_dy_xhat;
                  const double scale = Gv[c] * inv_std[c];
                  if (batch_stats) {
                    const double n = static_cast<double>(K);
                    for (std::size_t k = 0; k < K; ++k)
                      gx(k, c) += scale * (dy(k, c) - sum_dy / n - xhat(k, c) * sum_dy_xhat / n);
                  } else {
                    for (std::size_t k = 0; k < K; ++k) gx(k, c) += scale * dy(k, c);
                  }
                }
              });
}

Var Tape::concat_cols(Var a, Var b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.rows() == B.rows(), "concat: row count " + std::to_string(A.rows()) + " vs " +
                                    std::to_string(B.rows()));
  const std::size_t K = A.rows(), ca = A.cols(), cb = B.cols();
  Matrix Y(K, ca + cb);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t c = 0; c < ca; ++c) Y(k, c) = A(k, c);
    for (std::size_t c = 0; c < cb; ++c) Y(k, ca + c) = B(k, c);
  }
  const std::size_t ai = a.id, bi = b.id;
  return push(std::move(Y), {ai, bi}, [ai, bi, K, ca, cb](Tape& t, const Node& self) {
    Matrix& ga = t.adj(ai);
    Matrix& gb = t.adj(bi);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t c = 0; c < ca; ++c) ga(k, c) += self.adjoint(k, c);
      for (std::size_t c = 0; c < cb; ++c) gb(k, c) += self.adjoint(k, ca + c);
    }
  });
}

Var Tape::slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Matrix& X = value(x);
  require(begin < end && end <= X.cols(), "slice: columns [" + std::to_string(begin) + ", " +
                                              std::to_string(end) + ") out of " +
                                              shape_string(X));
  const std::size_t K = X.rows(), w = end - begin;
  Matrix Y(K, w);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t c = 0; c < w; ++c) Y(k, c) = X(k, begin + c);
  const std::size_t xi = x.id;
  return push(std::move(Y), {xi}, [xi, K, w, begin](Tape& t, const Node& self) {
    Matrix& gx = t.adj(xi);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t c = 0; c < w; ++c) gx(k, begin + c) += self.adjoint(k, c);
  });
}

Var Tape::cross_entropy(Var probs, std::span<const int> labels) {
  const Matrix& P = value(probs);
  require(labels.size() == P.rows(), "cross_entropy: " + std::to_string(labels.size()) +
                                         " labels for " + std::to_string(P.rows()) + " rows");
  const std::size_t K = P.rows();
  constexpr double kTiny = 1e-300;
  double total = 0.0;
  std::vector<int> lab(labels.begin(), labels.end());
  for (std::size_t k = 0; k < K; ++k) {
    if (lab[k] < 0 || static_cast<std::size_t>(lab[k]) >= P.cols())
      throw UsageError("cross_entropy: label " + std::to_string(lab[k]) + " out of range");
    total -= std::log(std::max(P(k, lab[k]), kTiny));
  }
  Matrix Y(1, 1, total / static_cast<double>(K));
  const std::size_t pi = probs.id;
  return push(std::move(Y), {pi}, [pi, K, lab = std::move(lab)](Tape& t, const Node& self) {
    Matrix& gp = t.adj(pi);
    const Matrix& Pv = t.nodes_[pi].value;
    const double g = self.adjoint[0] / static_cast<double>(K);
    for (std::size_t k = 0; k < K; ++k) {
      const double p = Pv(k, lab[k]);
      if (p > kTiny) gp(k, lab[k]) -= g / p;
    }
  });
}

Var Tape::sum(Var x) {
  const Matrix& X = value(x);
  double total = 0.0;
  for (double v : X.data()) total += v;
  const std::size_t xi = x.id;
  return push(Matrix(1, 1, total), {xi}, [xi](Tape& t, const Node& self) {
    Matrix& gx = t.adj(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.adjoint[0];
  });
}

void Tape::backward(Var loss) {
  if (!loss.valid() || loss.id >= nodes_.size()) throw UsageError("backward: unknown node");
  const Matrix& L = nodes_[loss.id].value;
  if (L.rows() != 1 || L.cols() != 1)
    throw UsageError("backward: loss must be a scalar, got " + shape_string(L));
  for (auto& n : nodes_) n.adjoint = Matrix();
  adj(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.adjoint.empty()) continue;
    if (n.backprop) n.backprop(*this, n);
    if (n.is_param && params_ != nullptr) params_->accumulate_grad(n.param, n.adjoint);
  }
}

// ---------------------------------------------------------------------------
// Finite differences

double gradient_relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

std::uint64_t Tape::kink_signature() const {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (!nodes_[id].piecewise) continue;
    const Matrix& in = nodes_[nodes_[id].inputs.front()].value;
    for (double v : in.data()) {
      h ^= v > 0.0 ? 0x9eu : 0x3bu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

GradCheckResult finite_difference_check(ParamStore& params,
                                        const std::function<LossProbe(bool)>& loss_fn,
                                        double step, double tight_tolerance) {
  params.zero_grad();
  const std::uint64_t base = loss_fn(true).kink_signature;
  GradCheckResult result;
  std::size_t tight = 0, checked = 0;
  for (auto& e : params.entries()) {
    const Matrix analytic = e.grad;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double original = e.value[i];
      e.value[i] = original + step;
      const LossProbe up = loss_fn(false);
      e.value[i] = original - step;
      const LossProbe down = loss_fn(false);
      e.value[i] = original;
      ++result.coordinates;
      if (up.kink_signature != base || down.kink_signature != base) {
        ++result.kink_straddles;
        result.relative_errors.push_back(-1.0);
        continue;
      }
      const double numeric = (up.loss - down.loss) / (2.0 * step);
      const double err = gradient_relative_error(analytic[i], numeric);
      result.relative_errors.push_back(err);
      result.max_relative_error = std::max(result.max_relative_error, err);
      ++checked;
      if (err < tight_tolerance) ++tight;
    }
  }
  result.fraction_below_tight =
      checked == 0 ? 1.0 : static_cast<double>(tight) / static_cast<double>(checked);
  return result;
}

}  // namespace molmix
