#include <doctest.h>

#include <cmath>
#include <limits>

#include "cagnet/autodiff.hpp"
#include "cagnet/error.hpp"
#include "cagnet/optim.hpp"
#include "support.hpp"

using namespace cagnet;
using ad::Tape;
using ad::Var;
using T = Tensor<double>;
using cagnet::testing::rel_error;

namespace {

T random_tensor(Rng& rng, Shape shape) {
  T t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

// Builds a scalar from `inputs` on a fresh tape; compares tape gradients with
// central differences for every input element and returns the worst error.
double fd_check(std::vector<T> inputs, const std::function<Var<double>(std::vector<Var<double>>&)>& f,
                double h = 1e-5) {
  auto eval = [&](std::vector<T>& xs, std::vector<T>* grads) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (auto& x : xs) vars.push_back(tape.variable(x));
    const auto loss = f(vars);
    const double value = loss.value().item();
    if (grads) {
      tape.backward(loss);
      for (auto& v : vars) grads->push_back(tape.grad(v));
    }
    return value;
  };
  std::vector<T> analytic;
  eval(inputs, &analytic);
  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + h;
      const double up = eval(inputs, nullptr);
      inputs[k][i] = orig - h;
      const double down = eval(inputs, nullptr);
      inputs[k][i] = orig;
      worst = std::max(worst, rel_error(analytic[k][i], (up - down) / (2 * h)));
    }
  }
  return worst;
}

// Weighted sum so that every output element gets a distinct upstream gradient.
Var<double> weighted_sum(Var<double> x) {
  auto& tape = *x.tape;
  T w(x.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.17 * static_cast<double>(i % 7);
  return ad::sum(ad::mul(x, tape.constant(w)));
}

}  // namespace

TEST_CASE("matmul values and shape errors") {
  Tape<double> tape;
  auto eye = tape.constant(T({2, 2}, {1, 0, 0, 1}));
  auto m = tape.constant(T({2, 2}, {1, 2, 3, 4}));
  CHECK(ad::matmul(eye, m).value() == T({2, 2}, {1, 2, 3, 4}));
  auto a = tape.constant(T({1, 2}, {1, 2}));
  auto b = tape.constant(T({2, 1}, {3, 4}));
  CHECK(ad::matmul(a, b).value().item() == 11.0);
  CHECK_THROWS_AS(ad::matmul(a, a), DimensionError);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(1);
  const double err = fd_check({random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})},
                              [](auto& v) { return ad::sum(ad::matmul(v[0], v[1])); });
  CHECK(err < 1e-6);
}

TEST_CASE("masked_softmax examples") {
  Tape<double> tape;
  auto p = ad::masked_softmax(tape.constant(T({1, 3}, {1, 1, 1})), ad::Mask{true, true, true}).value();
  for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));

  auto q = ad::masked_softmax(tape.constant(T({1, 3}, {0, 0, 5})), ad::Mask{true, true, false}).value();
  CHECK(q[0] == doctest::Approx(0.5));
  CHECK(q[1] == doctest::Approx(0.5));
  CHECK(q[2] == 0.0);

  // softmax([1000,1001,1002]) reduces to softmax([0,1,2]) by shift invariance.
  auto r = ad::softmax(tape.constant(T({1, 3}, {1000, 1001, 1002}))).value();
  const double z = 1 + std::exp(1.0) + std::exp(2.0);
  CHECK(r[0] == doctest::Approx(1 / z).epsilon(1e-12));
  CHECK(r[1] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
  CHECK(r[2] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-12));
  CHECK(r[0] == doctest::Approx(0.09003).epsilon(1e-4));
  CHECK(r[1] == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(r[2] == doctest::Approx(0.66524).epsilon(1e-4));

  CHECK_THROWS_AS(ad::masked_softmax(tape.constant(T({1, 2}, {1, 2})), ad::Mask{false, false}), DegenerateError);
}

TEST_CASE("masked_softmax properties on random rows") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 1 + rng.below(4), cols = 1 + rng.below(9);
    ad::Mask mask(cols);
    for (std::size_t j = 0; j < cols; ++j) mask[j] = rng.uniform() < 0.6;
    mask[rng.below(cols)] = true;
    T logits = random_tensor(rng, {rows, cols});
    Tape<double> tape;
    const auto p = ad::masked_softmax(tape.constant(logits), mask).value();
    T shifted = logits;
    const double c = rng.uniform(-50, 50);
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += c;
    const auto ps = ad::masked_softmax(tape.constant(shifted), mask).value();
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0;
      for (std::size_t j = 0; j < cols; ++j) {
        if (!mask[j]) CHECK(p.at(r, j) == 0.0);
        total += p.at(r, j);
        CHECK(std::abs(p.at(r, j) - ps.at(r, j)) <= 1e-9);
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("masked_softmax gradient") {
  Rng rng(3);
  const ad::Mask mask{true, false, true, true, false};
  const double err =
      fd_check({random_tensor(rng, {3, 5})}, [&](auto& v) { return weighted_sum(ad::masked_softmax(v[0], mask)); });
  CHECK(err < 1e-6);
}

TEST_CASE("layer_norm examples and properties") {
  Tape<double> tape;
  auto gamma = tape.constant(T({3}, 1.0));
  auto beta = tape.constant(T({3}, 0.0));
  auto flat = ad::layer_norm(tape.constant(T({1, 3}, {4, 4, 4})), gamma, beta).value();
  for (std::size_t i = 0; i < 3; ++i) CHECK(flat[i] == 0.0);

  auto y = ad::layer_norm(tape.constant(T({1, 3}, {1, 2, 3})), gamma, beta, 1e-12).value();
  // Mean 2, population variance 2/3.
  const double s = std::sqrt(1.5);
  CHECK(y[0] == doctest::Approx(-s).epsilon(1e-9));
  CHECK(std::abs(y[1]) < 1e-12);
  CHECK(y[2] == doctest::Approx(s).epsilon(1e-9));
  CHECK(y[2] == doctest::Approx(1.2247).epsilon(1e-4));

  Rng rng(11);
  const T x = random_tensor(rng, {6, 10});
  auto g = tape.constant(T({10}, 1.0));
  auto b = tape.constant(T({10}, 0.0));
  const auto out = ad::layer_norm(tape.constant(x), g, b, 1e-14).value();
  for (std::size_t r = 0; r < 6; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < 10; ++c) mean += out.at(r, c) / 10;
    for (std::size_t c = 0; c < 10; ++c) var += (out.at(r, c) - mean) * (out.at(r, c) - mean) / 10;
    CHECK(std::abs(mean) <= 1e-9);
    CHECK(std::abs(var - 1) <= 1e-6);
  }
}

TEST_CASE("layer_norm gradient") {
  Rng rng(5);
  const double err = fd_check({random_tensor(rng, {4, 8}), random_tensor(rng, {8}), random_tensor(rng, {8})},
                              [](auto& v) { return weighted_sum(ad::layer_norm(v[0], v[1], v[2])); });
  CHECK(err < 1e-5);
}

TEST_CASE("gelu values") {
  Tape<double> tape;
  auto y = ad::gelu(tape.constant(T({3}, {0, 10, 1}))).value();
  CHECK(y[0] == 0.0);
  CHECK(std::abs(y[1] - 10) < 1e-9);
  CHECK(y[2] == doctest::Approx(0.5 * (1 + std::erf(1 / std::sqrt(2.0)))).epsilon(1e-14));
  CHECK(y[2] == doctest::Approx(0.841345).epsilon(1e-6));
}

TEST_CASE("elementwise and structural op gradients") {
  Rng rng(9);
  using Fn = std::function<Var<double>(std::vector<Var<double>>&)>;
  const std::vector<std::pair<const char*, std::pair<std::vector<T>, Fn>>> cases = {
      {"gelu", {{random_tensor(rng, {3, 4})}, [](auto& v) { return weighted_sum(ad::gelu(v[0])); }}},
      {"sigmoid", {{random_tensor(rng, {3, 4})}, [](auto& v) { return weighted_sum(ad::sigmoid(v[0])); }}},
      {"relu", {{random_tensor(rng, {3, 4})}, [](auto& v) { return weighted_sum(ad::relu(v[0])); }}},
      {"add/mul",
       {{random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})},
        [](auto& v) { return weighted_sum(ad::mul(ad::add(v[0], v[1]), v[1])); }}},
      {"scale", {{random_tensor(rng, {2, 3})}, [](auto& v) { return weighted_sum(ad::scale(v[0], 2.5)); }}},
      {"linear",
       {{random_tensor(rng, {3, 4}), random_tensor(rng, {4, 5}), random_tensor(rng, {5})},
        [](auto& v) { return weighted_sum(ad::linear(v[0], v[1], v[2])); }}},
      {"add_row_vector",
       {{random_tensor(rng, {3, 4}), random_tensor(rng, {4})},
        [](auto& v) { return weighted_sum(ad::add_row_vector(v[0], v[1])); }}},
      {"transpose", {{random_tensor(rng, {3, 4})}, [](auto& v) { return weighted_sum(ad::transpose(v[0])); }}},
      {"slice/concat",
       {{random_tensor(rng, {2, 6}), random_tensor(rng, {2, 3})},
        [](auto& v) { return weighted_sum(ad::concat_cols<double>({ad::slice_cols(v[0], 1, 4), v[1]})); }}},
      {"stack_rows",
       {{random_tensor(rng, {1, 3}), random_tensor(rng, {1, 3})},
        [](auto& v) { return weighted_sum(ad::stack_rows<double>({v[0], v[1], v[0]})); }}},
      {"reshape", {{random_tensor(rng, {2, 6})}, [](auto& v) { return weighted_sum(ad::reshape(v[0], {3, 4})); }}},
      {"masked_mean_pool",
       {{random_tensor(rng, {5, 3})},
        [](auto& v) { return weighted_sum(ad::masked_mean_pool(v[0], ad::Mask{true, false, true, true, false})); }}},
      {"mean", {{random_tensor(rng, {3, 3})}, [](auto& v) { return ad::mean(ad::mul(v[0], v[0])); }}},
      {"cross_entropy",
       {{random_tensor(rng, {3, 4})}, [](auto& v) { return ad::softmax_cross_entropy(v[0], {0, 3, 1}); }}},
  };
  for (const auto& [name, c] : cases) {
    CAPTURE(name);
    CHECK(fd_check(c.first, c.second) < 1e-4);
  }
}

TEST_CASE("masked_mean_pool examples") {
  Tape<double> tape;
  auto a = ad::masked_mean_pool(tape.constant(T({2, 2}, {1, 1, 3, 3})), ad::Mask{true, true}).value();
  CHECK(a == T({2}, {2, 2}));
  auto b = ad::masked_mean_pool(tape.constant(T({2, 2}, {1, 1, 9, 9})), ad::Mask{true, false}).value();
  CHECK(b == T({2}, {1, 1}));
  CHECK_THROWS_AS(ad::masked_mean_pool(tape.constant(T({2, 2}, 1.0)), ad::Mask{false, false}), DegenerateError);

  Rng rng(13);
  const T x = random_tensor(rng, {7, 768});
  const ad::Mask mask{false, true, false, true, false, false, true};
  const auto pooled = ad::masked_mean_pool(tape.constant(x), mask).value();
  for (std::size_t c = 0; c < 768; ++c) {
    const double expected = (x.at(1, c) + x.at(3, c) + x.at(6, c)) / 3.0;
    CHECK(std::abs(pooled[c] - expected) < 1e-12);
  }
}

TEST_CASE("backward basics and errors") {
  Tape<double> tape;
  auto w = tape.variable(T({5}, {1, 2, 3, 4, 5}));
  auto loss = ad::sum(w);
  tape.backward(loss);
  CHECK(tape.grad(w) == T({5}, 1.0));
  CHECK_THROWS_AS(tape.backward(loss), TapeError);

  Tape<double> t2;
  auto v = t2.variable(T({3}, {1, 2, 3}));
  t2.backward(ad::sum(ad::mul(v, v)));
  CHECK(t2.grad(v) == T({3}, {2, 4, 6}));

  Tape<double> t3;
  auto m = t3.variable(T({2}, {1, 2}));
  CHECK_THROWS_AS(t3.backward(ad::scale(m, 2.0)), TapeError);
}

TEST_CASE("forward ops reject non-finite results") {
  Tape<double> tape;
  auto big = tape.constant(T({1, 1}, 1e300));
  CHECK_THROWS_AS(ad::mul(big, big), NonFiniteError);
}

TEST_CASE("dropout is inverted and parameter-free at eval") {
  Rng rng(1);
  Tape<double> tape;
  auto x = tape.constant(T({1, 1000}, 1.0));
  const auto eval = ad::dropout(x, 0.4, false, rng).value();
  CHECK(eval == T({1, 1000}, 1.0));
  const auto train = ad::dropout(x, 0.4, true, rng).value();
  std::size_t kept = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    CHECK((train[i] == 0.0 || std::abs(train[i] - 1 / 0.6) < 1e-12));
    kept += train[i] != 0.0;
  }
  CHECK(kept > 500);
  CHECK(kept < 700);
}

TEST_CASE("detach blocks gradient flow") {
  Tape<double> tape;
  auto w = tape.variable(T({2}, {1, 2}));
  tape.backward(ad::sum(ad::add(ad::detach(w), w)));
  CHECK(tape.grad(w) == T({2}, 1.0));
}

TEST_CASE("adamw first step and identities") {
  ModelParams<double> p{{"w", T({1}, {1.0})}};
  AdamWState<double> state;
  adamw_step(p, {{"w", T({1}, {1.0})}}, state);
  // m_hat = v_hat = 1: w' = 1 - lr*1/(1+eps) - lr*wd*1.
  CHECK(p["w"][0] == doctest::Approx(1 - 1e-4 / (1 + 1e-8) - 1e-8).epsilon(1e-15));
  CHECK(state.step == 1);

  ModelParams<double> q{{"a", T({3}, {1, -2, 3})}};
  AdamWState<double> s2;
  s2.hyper.weight_decay = 0;
  const auto before = q;
  adamw_step(q, {{"a", T({3}, 0.0)}}, s2);
  CHECK(q == before);
}

TEST_CASE("adamw descends a quadratic") {
  ModelParams<double> p{{"w", T({1}, {5.0})}};
  AdamWState<double> state;
  state.hyper.lr = 0.1;
  double prev = 25;
  for (int i = 0; i < 10; ++i) {
    adamw_step(p, {{"w", T({1}, {2 * p["w"][0]})}}, state);
    const double f = p["w"][0] * p["w"][0];
    CHECK(f < prev);
    prev = f;
  }
}

TEST_CASE("adamw rejects non-finite gradients atomically") {
  ModelParams<double> p{{"a", T({1}, {1.0})}, {"b", T({1}, {2.0})}};
  AdamWState<double> state;
  const auto before = p;
  try {
    adamw_step(p, {{"a", T({1}, {0.5})}, {"b", T({1}, {std::numeric_limits<double>::infinity()})}}, state);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
  CHECK(p == before);
  CHECK(state.step == 0);
}
