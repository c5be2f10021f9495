#include <doctest.h>

#include "../support/oracles.hpp"
#include "rosa/adapters.hpp"
#include "rosa/errors.hpp"

using namespace rosa;
using rosa::testing::naive_matmul;

namespace {

double rel_err(const Matrix& a, const Matrix& b) {
  return frobenius_norm(a - b) / std::max(frobenius_norm(b), 1e-300);
}

RosaAdapter perturbed_rosa(SeededRng& rng, std::size_t m, std::size_t n, std::size_t rank) {
  RosaAdapter ad = rosa_init(Matrix::gaussian(m, n, 1.0, rng), rank, SamplingScheme::Random, rng);
  ad.a += Matrix::gaussian(m, rank, 0.3, rng);
  ad.b += Matrix::gaussian(rank, n, 0.3, rng);
  return ad;
}

}  // namespace

TEST_CASE("rosa_init on a diagonal matrix") {
  SeededRng rng(0);
  RosaAdapter ad = rosa_init(Matrix::diagonal(std::vector<double>{3, 2, 1}), 1, SamplingScheme::Top, rng);
  CHECK(ad.a == Matrix(3, 1, std::vector<double>{3, 0, 0}));
  CHECK(ad.b == Matrix(1, 3, std::vector<double>{1, 0, 0}));
  CHECK(ad.w_fixed == Matrix::diagonal(std::vector<double>{0, 2, 1}));
  CHECK(ad.steps_since_factorize == 0);
}

TEST_CASE("rosa_init preserves the effective weight for any rank and scheme") {
  SeededRng rng(1);
  for (auto scheme : {SamplingScheme::Random, SamplingScheme::Top, SamplingScheme::Bottom}) {
    for (std::size_t r = 1; r <= 4; ++r) {
      Matrix w = Matrix::gaussian(6, 4, 1.0, rng);
      RosaAdapter ad = rosa_init(w, r, scheme, rng);
      CHECK(rel_err(ad.effective_weight(), w) <= 1e-10);
      CHECK(ad.a.rows() == 6);
      CHECK(ad.a.cols() == r);
      CHECK(ad.b.rows() == r);
      CHECK(ad.b.cols() == 4);
    }
  }
  Matrix w = Matrix::gaussian(3, 5, 1.0, rng);
  CHECK_THROWS_AS(rosa_init(w, 4, SamplingScheme::Top, rng), RankTooLargeError);
  CHECK_THROWS_AS(rosa_init(w, 0, SamplingScheme::Top, rng), RankTooLargeError);
}

TEST_CASE("rosa_init on an exactly rank-2 weight leaves nothing fixed") {
  SeededRng rng(2);
  Matrix w = matmul(Matrix::gaussian(4, 2, 1.0, rng), Matrix::gaussian(2, 4, 1.0, rng));
  RosaAdapter ad = rosa_init(w, 2, SamplingScheme::Top, rng);
  CHECK(frobenius_norm(ad.w_fixed) <= 1e-9 * frobenius_norm(w));
}

TEST_CASE("alternative initializations") {
  SeededRng rng(3);
  Matrix w = Matrix::gaussian(5, 4, 1.0, rng);
  RosaAdapter zero = rosa_init(w, 2, SamplingScheme::Random, rng, RosaInit::Zero);
  CHECK(zero.w_fixed == w);
  CHECK(max_abs(zero.a) == 0.0);
  CHECK(max_abs(zero.b) == 0.0);

  RosaAdapter additive = rosa_init(w, 2, SamplingScheme::Top, rng, RosaInit::Additive);
  CHECK(additive.w_fixed == w);
  // Effective weight is W plus the top-2 truncation of W.
  CHECK(rel_err(additive.effective_weight(), w + truncate(svd(w), 2)) <= 1e-10);
}

TEST_CASE("factorize_step keeps the forward map") {
  SeededRng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    RosaAdapter ad = perturbed_rosa(rng, 7, 5, 1 + trial % 5);
    Matrix probes = Matrix::gaussian(5, 100, 1.0, rng);
    Matrix before = rosa_forward(ad, probes);
    ad.steps_since_factorize = 17;
    RosaAdapter next = factorize_step(ad, rng);
    CHECK(max_abs_diff(rosa_forward(next, probes), before) <= 1e-9);
    CHECK(rel_err(next.effective_weight(), ad.effective_weight()) <= 1e-10);
    CHECK(next.steps_since_factorize == 0);
    CHECK(next.w_original == ad.w_original);
  }
}

TEST_CASE("factorize_step on a zero adapter factorizes w_fixed alone") {
  SeededRng rng(5);
  Matrix w = Matrix::gaussian(4, 4, 1.0, rng);
  RosaAdapter zero = rosa_init(w, 2, SamplingScheme::Top, rng, RosaInit::Zero);
  RosaAdapter next = factorize_step(zero, rng);
  SeededRng other(6);
  RosaAdapter direct = rosa_init(w, 2, SamplingScheme::Top, other);
  CHECK(max_abs_diff(next.a, direct.a) <= 1e-12);
  CHECK(max_abs_diff(next.b, direct.b) <= 1e-12);
  CHECK(max_abs_diff(next.w_fixed, direct.w_fixed) <= 1e-12);
}

TEST_CASE("two factorize steps without training are a round trip") {
  SeededRng rng(7);
  RosaAdapter ad = perturbed_rosa(rng, 6, 6, 3);
  RosaAdapter once = factorize_step(ad, rng);
  RosaAdapter twice = factorize_step(once, rng);
  CHECK(rel_err(twice.effective_weight(), ad.effective_weight()) <= 1e-10);
}

TEST_CASE("resampling lets the ROSA residual exceed rank R") {
  // Rank-1 updates pushed through distinct left directions between
  // factorizations accumulate a rank-2 residual.
  SeededRng rng(8);
  Matrix w = Matrix::diagonal(std::vector<double>{3, 2, 1, 0.5});
  RosaAdapter ad = rosa_init(w, 1, SamplingScheme::Bottom, rng);
  CHECK(numerical_rank(residual(ad), 1e-8) == 0);

  // "Train": a <- a + e1.
  ad.a(0, 0) += 1.0;
  CHECK(numerical_rank(residual(ad), 1e-8) == 1);
  ad = factorize_step(ad, rng);
  CHECK(numerical_rank(residual(ad), 1e-8) == 1);

  // Second update along e2 in the new subspace.
  ad.a(1, 0) += 1.0;
  CHECK(numerical_rank(residual(ad), 1e-8) == 2);
  CHECK(numerical_rank(ad.effective_weight() - w, 1e-8) > ad.rank);
}

TEST_CASE("rosa_forward") {
  SeededRng rng(9);
  RosaAdapter ad = perturbed_rosa(rng, 5, 4, 2);
  Matrix x = Matrix::gaussian(4, 6, 1.0, rng);
  Matrix dense = naive_matmul(ad.effective_weight(), x);
  CHECK(max_abs_diff(rosa_forward(ad, x), dense) <= 1e-10);
  CHECK(max_abs(rosa_forward(ad, Matrix(4, 3))) == 0.0);

  RosaAdapter no_a = ad;
  no_a.a = Matrix(5, 2);
  CHECK(max_abs_diff(rosa_forward(no_a, x), naive_matmul(no_a.w_fixed, x)) <= 1e-12);

  try {
    (void)rosa_forward(ad, Matrix(3, 2));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("3x2") != std::string::npos);
  }
}

TEST_CASE("lora init and forward") {
  SeededRng rng(10);
  Matrix w = Matrix::gaussian(6, 5, 1.0, rng);
  SeededRng r1(99), r2(99);
  LoraAdapter ad = lora_init(w, 3, r1);
  LoraAdapter again = lora_init(w, 3, r2);
  CHECK(ad.a == again.a);
  CHECK(max_abs(ad.b) == 0.0);
  CHECK(ad.effective_weight() == w);
  CHECK(max_abs(ad.a) > 0.0);

  Matrix x = Matrix::gaussian(5, 4, 1.0, rng);
  CHECK(lora_forward(ad, x) == matmul(w, x));
  CHECK(max_abs(lora_forward(ad, Matrix(5, 2))) == 0.0);

  ad.b = Matrix::gaussian(3, 5, 1.0, rng);
  CHECK(max_abs_diff(lora_forward(ad, x), naive_matmul(ad.effective_weight(), x)) <= 1e-10);
  CHECK(numerical_rank(residual(ad), 1e-8) <= 3);
  CHECK_THROWS_AS(lora_forward(ad, Matrix(4, 1)), ShapeError);
  CHECK_THROWS_AS(lora_init(w, 6, rng), RankTooLargeError);
}

TEST_CASE("lora init draws A with variance 1/R") {
  SeededRng rng(11);
  LoraAdapter ad = lora_init(Matrix(400, 400), 4, rng);
  const double var = frobenius_norm_sq(ad.a) / static_cast<double>(ad.a.size());
  CHECK(var == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("ia3 forward") {
  SeededRng rng(12);
  Matrix w = Matrix::gaussian(4, 3, 1.0, rng);
  Ia3Adapter ad = ia3_init(w);
  Matrix x = Matrix::gaussian(3, 5, 1.0, rng);
  CHECK(ia3_forward(ad, x) == matmul(w, x));
  CHECK(ad.scale == Matrix(4, 1, 1.0));

  ad.scale = Matrix(4, 1);
  CHECK(max_abs(ia3_forward(ad, x)) == 0.0);

  ad.scale = Matrix::gaussian(4, 1, 1.0, rng);
  Matrix out = ia3_forward(ad, x);
  Matrix wx = naive_matmul(w, x);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(out(i, j) - ad.scale(i, 0) * wx(i, j)) <= 1e-12);
  CHECK_THROWS_AS(ia3_forward(ad, Matrix(2, 2)), ShapeError);
  CHECK(numerical_rank(residual(ia3_init(w)), 1e-8) == 0);
}

TEST_CASE("trainable parameter reduction") {
  CHECK(trainable_reduction(768, 768, 8) == 48.0);
  CHECK(trainable_reduction(1024, 1024, 4) == 128.0);
  CHECK(trainable_reduction(2, 2, 1) == 1.0);
  CHECK(trainable_reduction(3, 6, 2) == 1.0);
  CHECK_THROWS_AS(trainable_reduction(0, 3, 1), InvalidInputError);

  SeededRng rng(13);
  Matrix w = Matrix::gaussian(12, 8, 1.0, rng);
  RosaAdapter r = rosa_init(w, 3, SamplingScheme::Random, rng);
  LoraAdapter l = lora_init(w, 3, rng);
  CHECK(trainable_count(r) == 3 * (12 + 8));
  CHECK(trainable_count(l) == 3 * (12 + 8));
  CHECK(trainable_count(ia3_init(w)) == 12);
  CHECK(static_cast<double>(w.size()) / static_cast<double>(trainable_count(r)) ==
        doctest::Approx(trainable_reduction(12, 8, 3)));
}
