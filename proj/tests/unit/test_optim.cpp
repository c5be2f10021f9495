#include <doctest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "rosa/errors.hpp"
#include "rosa/optim.hpp"

using namespace rosa;

namespace {

GradientSet single(const Matrix& g) { return GradientSet{{ParamGrad{0, "weight", g}}}; }

std::vector<double> flat(const Matrix& m) { return {m.data().begin(), m.data().end()}; }

}  // namespace

TEST_CASE("sgd basics") {
  Matrix p(2, 2, std::vector<double>{1, 2, 3, 4});
  const Matrix before = p;
  std::vector<ParamRef> params{{0, "weight", &p}};
  sgd_step(params, single(Matrix(2, 2)), SgdState{0.5});
  CHECK(p == before);

  Matrix z(1, 3);
  std::vector<ParamRef> zp{{0, "weight", &z}};
  Matrix v(1, 3, std::vector<double>{1, -2, 3});
  sgd_step(zp, single(v), SgdState{1.0});
  CHECK(z == Matrix(1, 3, std::vector<double>{-1, 2, -3}));
  CHECK_THROWS_AS(sgd_step(zp, single(v), SgdState{0.0}), InvalidInputError);
}

TEST_CASE("sgd contracts on a quadratic bowl") {
  // f(w) = ||w - w*||^2, grad = 2 (w - w*); error shrinks by (1 - 2 lr) per step.
  SeededRng rng(1);
  Matrix target = Matrix::gaussian(3, 3, 1.0, rng);
  Matrix w(3, 3);
  std::vector<ParamRef> params{{0, "weight", &w}};
  const double start = frobenius_norm(w - target);
  for (int t = 0; t < 200; ++t) sgd_step(params, single(2.0 * (w - target)), SgdState{0.1});
  CHECK(frobenius_norm(w - target) <= 1e-6);
  CHECK(frobenius_norm(w - target) == doctest::Approx(start * std::pow(0.8, 200)).epsilon(1e-6));
}

TEST_CASE("adamw zero gradient without decay leaves params unchanged") {
  Matrix p(2, 3, 1.5);
  std::vector<ParamRef> params{{0, "weight", &p}};
  AdamwState state(AdamwConfig{1e-2, 0.9, 0.98, 1e-6, 0.0});
  for (int i = 0; i < 5; ++i) adamw_step(params, single(Matrix(2, 3)), state);
  CHECK(p == Matrix(2, 3, 1.5));
}

TEST_CASE("adamw first step has magnitude close to lr") {
  Matrix p(1, 3);
  std::vector<ParamRef> params{{0, "weight", &p}};
  AdamwState state(AdamwConfig{1e-3, 0.9, 0.98, 1e-6, 0.0});
  adamw_step(params, single(Matrix(1, 3, std::vector<double>{2.0, -0.5, 7.0})), state);
  CHECK(p(0, 0) == doctest::Approx(-1e-3 * 2.0 / (2.0 + 1e-6)));
  CHECK(p(0, 1) == doctest::Approx(1e-3 * 0.5 / (0.5 + 1e-6)));
  CHECK(p(0, 2) == doctest::Approx(-1e-3 * 7.0 / (7.0 + 1e-6)));
}

TEST_CASE("adamw with zero betas is normalized sgd") {
  SeededRng rng(2);
  Matrix p = Matrix::gaussian(3, 2, 1.0, rng);
  std::vector<ParamRef> params{{0, "weight", &p}};
  AdamwState state(AdamwConfig{0.1, 0.0, 0.0, 1e-6, 0.0});
  for (int i = 0; i < 3; ++i) {
    Matrix g = Matrix::gaussian(3, 2, 1.0, rng);
    Matrix expect = p;
    for (std::size_t k = 0; k < expect.size(); ++k) {
      expect.data()[k] -= 0.1 * g.data()[k] / (std::abs(g.data()[k]) + 1e-6);
    }
    adamw_step(params, single(g), state);
    CHECK(max_abs_diff(p, expect) <= 1e-15);
  }
}

TEST_CASE("adamw matches a straight-line reference over 50 steps") {
  SeededRng rng(3);
  Matrix p = Matrix::gaussian(4, 3, 1.0, rng);
  Matrix q = Matrix::gaussian(2, 1, 1.0, rng);
  std::vector<double> ref_p = flat(p), ref_q = flat(q);
  testing::ReferenceAdamw ref_a{2e-3, 0.9, 0.98, 1e-6, 0.1, {}, {}};
  testing::ReferenceAdamw ref_b{2e-3, 0.9, 0.98, 1e-6, 0.1, {}, {}};
  AdamwState state(AdamwConfig{2e-3, 0.9, 0.98, 1e-6, 0.1});
  std::vector<ParamRef> params{{0, "a", &p}, {0, "b", &q}};
  for (int t = 0; t < 50; ++t) {
    Matrix gp = Matrix::gaussian(4, 3, 1.0, rng);
    Matrix gq = Matrix::gaussian(2, 1, 1.0, rng);
    adamw_step(params, GradientSet{{ParamGrad{0, "a", gp}, ParamGrad{0, "b", gq}}}, state);
    ref_a.step(ref_p, flat(gp));
    ref_b.step(ref_q, flat(gq));
  }
  for (std::size_t i = 0; i < ref_p.size(); ++i) CHECK(std::abs(p.data()[i] - ref_p[i]) <= 1e-10);
  for (std::size_t i = 0; i < ref_q.size(); ++i) CHECK(std::abs(q.data()[i] - ref_q[i]) <= 1e-10);
  CHECK(state.moments(0, "a")->steps == 50);
}

TEST_CASE("adamw buffers exist only for trained tensors and reset per layer") {
  Matrix a(2, 2), b(2, 2), c(1, 1);
  std::vector<ParamRef> params{{0, "a", &a}, {0, "b", &b}, {1, "bias", &c}};
  AdamwState state(AdamwConfig{});
  GradientSet g{{ParamGrad{0, "a", Matrix(2, 2, 1.0)}, ParamGrad{0, "b", Matrix(2, 2, 1.0)},
                 ParamGrad{1, "bias", Matrix(1, 1, 1.0)}}};
  adamw_step(params, g, state);
  CHECK(state.buffer_count() == 3);
  CHECK(state.moments(0, "w_fixed") == nullptr);
  state.reset_layer(0);
  CHECK(state.buffer_count() == 1);
  CHECK(state.moments(0, "a") == nullptr);
  adamw_step(params, g, state);
  CHECK(state.moments(0, "a")->steps == 1);
  CHECK(state.moments(1, "bias")->steps == 2);
}

TEST_CASE("misaligned gradients are a contract violation") {
  Matrix a(2, 2);
  std::vector<ParamRef> params{{0, "a", &a}};
  AdamwState state(AdamwConfig{});
  CHECK_THROWS_AS(sgd_step(params, GradientSet{}, SgdState{0.1}), ContractViolation);
  CHECK_THROWS_AS(adamw_step(params, GradientSet{{ParamGrad{0, "b", Matrix(2, 2)}}}, state), ContractViolation);
  CHECK_THROWS_AS(adamw_step(params, GradientSet{{ParamGrad{0, "a", Matrix(2, 3)}}}, state), ContractViolation);
  CHECK_THROWS_AS(AdamwState(AdamwConfig{1e-3, 1.0, 0.9, 1e-8, 0.0}), InvalidInputError);
}
