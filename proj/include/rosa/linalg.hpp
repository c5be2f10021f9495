#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rosa/rng.hpp"

namespace rosa {

/// Dense row-major matrix of doubles.
///
/// A default-constructed Matrix is an empty 0x0 placeholder; every matrix
/// built with explicit dimensions has rows, cols >= 1.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);
  static Matrix column(std::span<const double> values);
  static Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, SeededRng& rng);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::vector<double> col(std::size_t c) const;
  void set_col(std::size_t c, std::span<const double> values);

  Matrix transpose() const;
  std::string shape_string() const;

  Matrix& operator+=(const Matrix& rhs);
  Matrix& operator-=(const Matrix& rhs);
  Matrix& operator*=(double s) noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix lhs, const Matrix& rhs);
Matrix operator-(Matrix lhs, const Matrix& rhs);
Matrix operator*(Matrix m, double s);
Matrix operator*(double s, Matrix m);

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without forming the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T without forming the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);

Matrix select_columns(const Matrix& m, std::span<const std::size_t> indices);
Matrix select_rows(const Matrix& m, std::span<const std::size_t> indices);

double frobenius_norm(const Matrix& m);
double frobenius_norm_sq(const Matrix& m);
double max_abs(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& m);
void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

/// Thin SVD: u is M x K, v is N x K with K = min(M, N), sigma descending.
struct SvdFactors {
  Matrix u;
  std::vector<double> sigma;
  Matrix v;
};

/// One-sided Jacobi SVD.
///
/// Deterministic: singular values are sorted descending (ties keep the
/// original column order), and each column of u is signed so that its
/// largest-magnitude entry is positive (first such row on ties), with the
/// matching column of v flipped alongside. Columns belonging to zero
/// singular values are completed to an orthonormal set.
SvdFactors svd(const Matrix& w);

std::vector<double> singular_values(const Matrix& w);
Matrix reconstruct(const SvdFactors& f);
// Best rank-`rank` approximation from precomputed factors.
Matrix truncate(const SvdFactors& f, std::size_t rank);

// Number of singular values strictly above rel_tol * sigma_max; 0 for a zero matrix.
std::size_t numerical_rank(std::span<const double> sigma, double rel_tol);
std::size_t numerical_rank(const Matrix& m, double rel_tol);

enum class SamplingScheme { Random, Top, Bottom };

struct IndexSubset {
  std::vector<std::size_t> indices;
};

/// Picks `count` distinct singular-value indices out of [0, bound).
/// Random draws uniformly without replacement (returned ascending); Top and
/// Bottom take the leading / trailing block.
IndexSubset sample_indices(std::size_t count, std::size_t bound, SamplingScheme scheme,
                           SeededRng& rng);

// Full column rank test shared by projection and least squares:
// smallest singular value must exceed 1e-10 * largest.
inline constexpr double kFullRankTolerance = 1e-10;

/// Orthogonal projector onto range(x), built as Q Q^T from the left
/// singular vectors of x.
Matrix projection_onto_range(const Matrix& x);

/// Minimizer of ||x w - y||_F for full-column-rank x, via the SVD of x.
Matrix least_squares(const Matrix& x, const Matrix& y);

}  // namespace rosa
