#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rosa/linalg.hpp"

// Closed-form machinery for the linear fine-tuning problem
//   min_W ||X W - Y||_F^2,  W = W0 + (low-rank update)
// with X (n x d), Y (n x p), W0 (d x p).
namespace rosa::oracle {

struct RegressionProblem {
  Matrix x;
  Matrix y;
  Matrix w0;

  // Throws ShapeError on inconsistent shapes, InvalidInputError when empty.
  // Rank deficiency of X surfaces as SingularMatrixError from the routines
  // that project onto range(X).
  void validate() const;
};

struct LowRankUpdate {
  Matrix a;  // d x R
  Matrix b;  // R x p
};

/// Projected quantities shared by every closed-form routine.
struct ProjectedResidual {
  Matrix least_squares;  // (X^T X)^{-1} X^T Y, d x p
  Matrix projected_y;    // Pi_X Y, n x p
  Matrix residual;       // Pi_X Y - X W0, n x p
  SvdFactors residual_svd;
  double irreducible = 0.0;  // ||Pi_X Y - Y||_F^2
};

ProjectedResidual project(const RegressionProblem& prob);

// ||X W - Y||_F^2
double fit_error(const RegressionProblem& prob, const Matrix& w);

/// Global optimum of ||X (W0 + A B) - Y||_F^2 over A (d x R), B (R x p):
/// A B = (X^+ Y - W0) V_R V_R^T with V_R the top right singular vectors of
/// Pi_X Y - X W0. Returned as A = (X^+ Y - W0) V_R, B = V_R^T.
LowRankUpdate rrr_optimum(const RegressionProblem& prob, std::size_t rank);

/// Sum of squared singular values of Pi_X Y - X W0 beyond index R.
double lora_error_lower_bound(const RegressionProblem& prob, std::size_t rank);

struct RosaTrace {
  std::vector<Matrix> weights;  // W_0 ... W_T
  std::vector<double> errors;   // ||X W_t - Y||_F^2
  std::size_t t_predicted = 0;  // ceil(numerical_rank(X W0 - Pi_X Y) / R)
  double irreducible = 0.0;
};

// Relative threshold used to count the rank of the initial residual.
inline constexpr double kResidualRankTolerance = 1e-9;

/// Exact ROSA iteration: W_t = W_{t-1} + rrr_optimum(problem at W_{t-1}).
/// Throws NumericFailure if the error ever increases beyond rounding.
RosaTrace rosa_exact_iterate(const RegressionProblem& prob, std::size_t rank, std::size_t max_steps);

/// Closed-form iterate W_t = W0 + (X^+ Y - W0) sum_{i <= tR} v_i v_i^T.
Matrix closed_form_iterate(const RegressionProblem& prob, std::size_t rank, std::size_t step);

/// Realizable problem: X (n x d) full column rank, W* - W0 of exact rank
/// `residual_rank` (singular values drawn from [1, 2]), Y = X W*.
RegressionProblem realizable_instance(std::size_t n, std::size_t d, std::size_t p,
                                      std::size_t residual_rank, std::uint64_t seed);

/// Adds noise orthogonal to range(X) to Y so no W reaches zero error.
RegressionProblem with_orthogonal_noise(RegressionProblem prob, double scale, std::uint64_t seed);

}  // namespace rosa::oracle
