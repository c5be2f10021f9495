#include "rosa/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rosa/errors.hpp"
#include "rosa/rng.hpp"

namespace rosa::oracle {

namespace {

void check_rank(const RegressionProblem& prob, std::size_t rank) {
  const std::size_t bound = std::min(prob.x.cols(), prob.y.cols());
  if (rank == 0 || rank > bound) throw RankTooLargeError(rank, bound);
}

Matrix top_right_vectors(const SvdFactors& f, std::size_t first, std::size_t count) {
  std::vector<std::size_t> idx(count);
  for (std::size_t k = 0; k < count; ++k) idx[k] = first + k;
  return select_columns(f.v, idx);
}

// Orthonormal columns spanning a random k-dimensional subspace of R^n.
Matrix random_orthonormal(std::size_t n, std::size_t k, SeededRng& rng) {
  return svd(Matrix::gaussian(n, k, 1.0, rng)).u;
}

}  // namespace

void RegressionProblem::validate() const {
  if (x.empty() || y.empty() || w0.empty()) throw InvalidInputError("regression problem has empty matrices");
  if (x.rows() != y.rows()) throw ShapeError("X " + x.shape_string() + " vs Y " + y.shape_string());
  if (w0.rows() != x.cols() || w0.cols() != y.cols()) {
    throw ShapeError("W0 " + w0.shape_string() + " incompatible with X " + x.shape_string() +
                     " and Y " + y.shape_string());
  }
}

ProjectedResidual project(const RegressionProblem& prob) {
  prob.validate();
  ProjectedResidual out;
  out.least_squares = least_squares(prob.x, prob.y);
  out.projected_y = matmul(prob.x, out.least_squares);
  out.residual = out.projected_y - matmul(prob.x, prob.w0);
  out.residual_svd = svd(out.residual);
  out.irreducible = frobenius_norm_sq(out.projected_y - prob.y);
  return out;
}

double fit_error(const RegressionProblem& prob, const Matrix& w) {
  return frobenius_norm_sq(matmul(prob.x, w) - prob.y);
}

LowRankUpdate rrr_optimum(const RegressionProblem& prob, std::size_t rank) {
  check_rank(prob, rank);
  ProjectedResidual pr = project(prob);
  Matrix v_r = top_right_vectors(pr.residual_svd, 0, rank);  // p x R
  Matrix a = matmul(pr.least_squares - prob.w0, v_r);
  return {std::move(a), v_r.transpose()};
}

double lora_error_lower_bound(const RegressionProblem& prob, std::size_t rank) {
  check_rank(prob, rank);
  ProjectedResidual pr = project(prob);
  double bound = 0.0;
  for (std::size_t i = rank; i < pr.residual_svd.sigma.size(); ++i) {
    bound += pr.residual_svd.sigma[i] * pr.residual_svd.sigma[i];
  }
  return bound;
}

RosaTrace rosa_exact_iterate(const RegressionProblem& prob, std::size_t rank, std::size_t max_steps) {
  check_rank(prob, rank);
  ProjectedResidual pr = project(prob);
  const std::size_t residual_rank = numerical_rank(pr.residual_svd.sigma, kResidualRankTolerance);

  RosaTrace trace;
  trace.t_predicted = (residual_rank + rank - 1) / rank;
  trace.irreducible = pr.irreducible;
  trace.weights.push_back(prob.w0);
  trace.errors.push_back(fit_error(prob, prob.w0));

  // Rounding slack for the monotonicity check.
  const double slack = 1e-12 * std::max(frobenius_norm_sq(prob.y), 1.0);
  RegressionProblem current = prob;
  for (std::size_t t = 1; t <= max_steps; ++t) {
    LowRankUpdate step = rrr_optimum(current, rank);
    current.w0 += matmul(step.a, step.b);
    const double err = fit_error(prob, current.w0);
    if (!std::isfinite(err)) throw NumericFailure("rosa_exact_iterate: non-finite error at step " + std::to_string(t));
    if (err > trace.errors.back() + slack) {
      std::ostringstream msg;
      msg << "rosa_exact_iterate: error increased at step " << t << " (" << trace.errors.back()
          << " -> " << err << ")";
      throw NumericFailure(msg.str());
    }
    trace.weights.push_back(current.w0);
    trace.errors.push_back(err);
  }
  return trace;
}

Matrix closed_form_iterate(const RegressionProblem& prob, std::size_t rank, std::size_t step) {
  check_rank(prob, rank);
  ProjectedResidual pr = project(prob);
  const std::size_t count = std::min(step * rank, pr.residual_svd.sigma.size());
  if (count == 0) return prob.w0;
  Matrix v = top_right_vectors(pr.residual_svd, 0, count);
  return prob.w0 + matmul_nt(matmul(pr.least_squares - prob.w0, v), v);
}

RegressionProblem realizable_instance(std::size_t n, std::size_t d, std::size_t p,
                                      std::size_t residual_rank, std::uint64_t seed) {
  if (n == 0 || d == 0 || p == 0) throw InvalidInputError("realizable_instance: sizes must be positive");
  if (n < d) throw InvalidInputError("realizable_instance: need n >= d for full column rank X");
  if (residual_rank > std::min(d, p)) {
    throw InvalidInputError("realizable_instance: residual rank " + std::to_string(residual_rank) +
                            " exceeds min(d, p) = " + std::to_string(std::min(d, p)));
  }
  SeededRng rng(seed);
  RegressionProblem prob;
  prob.x = Matrix::gaussian(n, d, 1.0, rng);
  prob.w0 = Matrix::gaussian(d, p, 1.0, rng);
  Matrix w_star = prob.w0;
  if (residual_rank > 0) {
    Matrix left = random_orthonormal(d, residual_rank, rng);
    Matrix right = random_orthonormal(p, residual_rank, rng);
    for (std::size_t k = 0; k < residual_rank; ++k) {
      const double s = rng.uniform(1.0, 2.0);
      for (std::size_t r = 0; r < left.rows(); ++r) left(r, k) *= s;
    }
    w_star += matmul_nt(left, right);
  }
  prob.y = matmul(prob.x, w_star);
  // Gaussian X is full column rank with probability one; verify anyway.
  (void)projection_onto_range(prob.x);
  return prob;
}

RegressionProblem with_orthogonal_noise(RegressionProblem prob, double scale, std::uint64_t seed) {
  prob.validate();
  SeededRng rng(seed);
  Matrix g = Matrix::gaussian(prob.y.rows(), prob.y.cols(), scale, rng);
  Matrix p = projection_onto_range(prob.x);
  prob.y += g - matmul(p, g);
  return prob;
}

}  // namespace rosa::oracle
