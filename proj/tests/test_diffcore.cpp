#include <cmath>
#include <random>

#include "doctest.h"
#include "molmix/diffcore.hpp"
#include "molmix/rng.hpp"
#include "oracles.hpp"

using namespace molmix;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.data()) v = scale * standard_normal(rng);
  return m;
}

}  // namespace

TEST_CASE("relu zeroes negatives and the origin") {
  Tape t;
  Var x = t.constant(Matrix{{-1.0, 0.0, 2.0}});
  CHECK(t.value(t.relu(x)) == Matrix{{0.0, 0.0, 2.0}});
}

TEST_CASE("softmax of equal logits is uniform") {
  Tape t;
  const Matrix& p = t.value(t.softmax(t.constant(Matrix{{0.0, 0.0, 0.0, 0.0}})));
  for (double v : p.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("scaled sigmoid at zero is half the scale") {
  Tape t;
  CHECK(t.value(t.scaled_sigmoid(t.constant(Matrix{{0.0}}), 2e4))[0] == 1e4);
}

TEST_CASE("gradient of w*x with respect to w is x") {
  ParamStore store;
  const ParamId w = store.add("w", Matrix{{3.0}});
  Tape t(&store);
  Var loss = t.sum(t.mul_const(t.param(w), Matrix{{2.0}}));
  CHECK(t.value(loss)[0] == 6.0);
  t.backward(loss);
  CHECK(store.grad(w)[0] == 2.0);
}

TEST_CASE("clip at a negative input passes no gradient") {
  ParamStore store;
  const ParamId w = store.add("w", Matrix{{-5.0}});
  Tape t(&store);
  t.backward(t.sum(t.clip_zero(t.param(w))));
  CHECK(store.grad(w)[0] == 0.0);
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape t;
  Var x = t.constant(Matrix{{1.0, 2.0}});
  CHECK_THROWS_AS(t.backward(x), UsageError);
}

TEST_CASE("shape mismatches are configuration errors") {
  Tape t;
  Var a = t.constant(Matrix(2, 3));
  Var b = t.constant(Matrix(3, 2));
  CHECK_THROWS_AS(t.add(a, b), ConfigError);
  Var w = t.constant(Matrix(4, 2));
  Var bias = t.constant(Matrix(1, 4));
  CHECK_THROWS_AS(t.affine(a, w, bias), ConfigError);
}

TEST_CASE("softmax rows are non-negative and sum to one") {
  Rng rng = make_stream(5, 0);
  for (int trial = 0; trial < 50; ++trial) {
    Tape t;
    const Matrix& p = t.value(t.softmax(t.constant(random_matrix(8, 6, rng, 30.0))));
    for (std::size_t k = 0; k < p.rows(); ++k) {
      double s = 0.0;
      for (double v : p.row_span(k)) {
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("two-layer network gradient matches central differences") {
  // affine -> relu -> affine -> softmax -> cross-entropy, every parameter.
  Rng rng = make_stream(11, 0);
  const Matrix x = random_matrix(6, 5, rng);
  const std::vector<int> labels{0, 1, 2, 3, 1, 0};
  ParamStore store;
  const ParamId w1 = store.add("w1", random_matrix(7, 5, rng, 0.5));
  const ParamId b1 = store.add("b1", random_matrix(1, 7, rng, 0.1));
  const ParamId w2 = store.add("w2", random_matrix(4, 7, rng, 0.5));
  const ParamId b2 = store.add("b2", random_matrix(1, 4, rng, 0.1));

  auto forward = [&](ParamStore& s, bool record) {
    Tape t(&s);
    Var h = t.relu(t.affine(t.constant(x), t.param(w1), t.param(b1)));
    Var loss = t.cross_entropy(t.softmax(t.affine(h, t.param(w2), t.param(b2))), labels);
    if (record) t.backward(loss);
    return t.value(loss)[0];
  };
  store.zero_grad();
  forward(store, true);

  std::size_t total = 0, tight = 0;
  double worst = 0.0;
  for (ParamId id : {w1, b1, w2, b2}) {
    const Matrix analytic = store.grad(id);
    auto f = [&](const std::vector<double>& theta) {
      ParamStore copy = store;
      copy.value(id).data() = theta;
      return forward(copy, false);
    };
    const auto numeric = oracle::numeric_gradient(f, store.value(id).data(), 1e-4);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double err = std::abs(analytic[i] - numeric[i]) /
                         std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-6});
      worst = std::max(worst, err);
      tight += err < 1e-4;
      ++total;
    }
  }
  CHECK(worst < 1e-2);
  CHECK(static_cast<double>(tight) >= 0.99 * static_cast<double>(total));
}

TEST_CASE("primitive gradients match central differences") {
  Rng rng = make_stream(12, 0);
  const Matrix gains{{1.5, 0.2}, {0.4, 2.0}, {0.7, 0.9}};
  const Matrix exps{{0.5, 0.9}, {0.7, 0.4}, {1.0, 0.6}};
  BatchNormState bn;
  bn.running_mean.assign(2, 0.0);
  bn.running_var.assign(2, 1.0);

  ParamStore store;
  const ParamId a = store.add("a", random_matrix(5, 2, rng));
  for (auto& v : store.value(a).data()) v = 1.0 + std::abs(v);  // interior of the power law
  const ParamId gamma = store.add("gamma", Matrix{{1.2, 0.8}});
  const ParamId beta = store.add("beta", Matrix{{0.1, -0.2}});
  const Matrix mask = random_matrix(5, 3, rng);

  auto forward = [&](ParamStore& s, bool record) {
    Tape t(&s);
    Var y = t.power_law(t.param(a), gains, exps, 1e-12);
    Var n = t.batchnorm(t.param(a), t.param(gamma), t.param(beta), bn, NormMode::kTrain, false);
    Var c = t.concat_cols(t.sigmoid(n), t.scaled_sigmoid(t.slice_cols(y, 0, 1), 3.0));
    Var loss = t.sum(t.mul_const(t.add(t.scale(y, 0.5), t.power(y, 1.3, 1e-12)), mask));
    Var shifted = t.clip_zero(t.add(t.param(a), t.constant(Matrix(5, 2, -0.5))));
    loss = t.add(loss, t.sum(t.power(shifted, 0.7, 1e-12)));
    loss = t.add(loss, t.sum(c));
    if (record) t.backward(loss);
    return t.value(loss)[0];
  };
  store.zero_grad();
  forward(store, true);
  for (ParamId id : {a, gamma, beta}) {
    const Matrix analytic = store.grad(id);
    auto f = [&](const std::vector<double>& theta) {
      ParamStore copy = store;
      copy.value(id).data() = theta;
      return forward(copy, false);
    };
    const auto numeric = oracle::numeric_gradient(f, store.value(id).data(), 1e-5);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double err = std::abs(analytic[i] - numeric[i]) /
                         std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-6});
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("adam first step moves each parameter by the learning rate") {
  ParamStore store;
  const ParamId p = store.add("p", Matrix{{1.0, -2.0, 0.5}});
  store.zero_grad();
  store.accumulate_grad(p, Matrix{{1.0, 1.0, 1.0}});
  store.adam_step(1e-3);
  CHECK(store.value(p)[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-9));
  CHECK(store.value(p)[1] == doctest::Approx(-2.0 - 1e-3).epsilon(1e-9));
  CHECK(store.step() == 1);
}

TEST_CASE("adam leaves parameters with zero gradient unchanged") {
  ParamStore store;
  const ParamId p = store.add("p", Matrix{{1.0, -2.0}});
  store.zero_grad();
  store.adam_step(1e-3);
  CHECK(store.value(p) == Matrix{{1.0, -2.0}});
}

TEST_CASE("adam matches a hand-rolled scalar recurrence") {
  const std::vector<double> grads{1.0, 1.0, -0.3, 2.5, 0.0, 0.7};
  const auto expected = oracle::adam_trajectory(0.25, grads, 1e-2);
  ParamStore store;
  const ParamId p = store.add("p", Matrix{{0.25}});
  double previous = 0.25;
  for (std::size_t t = 0; t < grads.size(); ++t) {
    store.zero_grad();
    store.accumulate_grad(p, Matrix{{grads[t]}});
    store.adam_step(1e-2);
    CHECK(store.value(p)[0] == doctest::Approx(expected[t]).epsilon(1e-12));
    if (t == 1) CHECK(store.value(p)[0] < previous);
    previous = store.value(p)[0];
  }
}

TEST_CASE("identical seeds give bit-identical parameters after training steps") {
  auto run = [] {
    Rng rng = make_stream(99, 0);
    ParamStore store;
    const ParamId w = store.add("w", random_matrix(3, 4, rng));
    const ParamId b = store.add("b", Matrix(1, 3));
    const Matrix x = random_matrix(16, 4, rng);
    std::vector<int> labels(16);
    for (auto& l : labels) l = uniform_index(rng, 3);
    for (int step = 0; step < 25; ++step) {
      store.zero_grad();
      Tape t(&store);
      t.backward(t.cross_entropy(t.softmax(t.affine(t.constant(x), t.param(w), t.param(b))), labels));
      store.adam_step(1e-2);
    }
    return store.value(w);
  };
  CHECK(run() == run());
}

TEST_CASE("gradient_relative_error uses the absolute floor") {
  CHECK(gradient_relative_error(0.0, 0.0) == 0.0);
  CHECK(gradient_relative_error(1e-9, 0.0) == doctest::Approx(1e-3));
  CHECK(gradient_relative_error(2.0, 1.0) == doctest::Approx(0.5));
}
