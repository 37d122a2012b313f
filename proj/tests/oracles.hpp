#pragma once

// Reference computations written independently of the library code paths
// they check.

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace oracle {

/// y = A x for a row-major rows x cols matrix.
inline std::vector<double> matvec(const std::vector<double>& a, std::size_t rows,
                                  std::size_t cols, const std::vector<double>& x) {
  std::vector<double> y(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y[r] += a[r * cols + c] * x[c];
  return y;
}

/// Central differences of f at theta.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> theta, double step) {
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + step;
    const double up = f(theta);
    theta[i] = keep - step;
    const double down = f(theta);
    theta[i] = keep;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// Wilson score interval bounds.
inline std::pair<double, double> wilson_bounds(double errors, double trials, double z) {
  const double p = errors / trials;
  const double denom = 1.0 + z * z / trials;
  const double centre = p + z * z / (2.0 * trials);
  const double spread = z * std::sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials));
  return {(centre - spread) / denom, (centre + spread) / denom};
}

/// Scalar Adam trajectory for a fixed gradient sequence.
inline std::vector<double> adam_trajectory(double theta, const std::vector<double>& grads,
                                           double lr, double b1 = 0.9, double b2 = 0.999,
                                           double eps = 1e-8) {
  std::vector<double> out;
  double m = 0.0, v = 0.0;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const double g = grads[t - 1];
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double mhat = m / (1.0 - std::pow(b1, static_cast<double>(t)));
    const double vhat = v / (1.0 - std::pow(b2, static_cast<double>(t)));
    theta -= lr * mhat / (std::sqrt(vhat) + eps);
    out.push_back(theta);
  }
  return out;
}

inline double log_softmax_entry(const std::vector<double>& logits, std::size_t i) {
  double mx = logits[0];
  for (double l : logits) mx = std::max(mx, l);
  double s = 0.0;
  for (double l : logits) s += std::exp(l - mx);
  return logits[i] - mx - std::log(s);
}

}  // namespace oracle
