#include "rosa/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "rosa/errors.hpp"

namespace rosa {

namespace {

constexpr int kMaxSweeps = 60;

void require_positive(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("matrix dimensions must be positive, got " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

std::string shape_pair(const Matrix& a, const Matrix& b) {
  return a.shape_string() + " vs " + b.shape_string();
}

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

// Rows of `rows_view` (length n each) are rotated pairwise until mutually
// orthogonal; `basis` accumulates the same rotations.
void jacobi_orthogonalize(Matrix& rows_view, Matrix& basis) {
  const std::size_t k = rows_view.rows();
  const std::size_t n = rows_view.cols();
  const std::size_t nb = basis.cols();
  const double tol = std::numeric_limits<double>::epsilon() * std::sqrt(static_cast<double>(n));

  std::vector<double> norms(k);
  for (std::size_t i = 0; i < k; ++i) {
    auto r = rows_view.row(i);
    norms[i] = dot(r.data(), r.data(), n);
  }

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < k; ++p) {
      for (std::size_t q = p + 1; q < k; ++q) {
        double* ap = rows_view.row(p).data();
        double* aq = rows_view.row(q).data();
        const double alpha = norms[p];
        const double beta = norms[q];
        if (alpha == 0.0 || beta == 0.0) continue;
        const double gamma = dot(ap, aq, n);
        if (std::abs(gamma) <= tol * std::sqrt(alpha) * std::sqrt(beta)) continue;
        rotated = true;

        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < n; ++i) {
          const double x = ap[i];
          const double y = aq[i];
          ap[i] = c * x - s * y;
          aq[i] = s * x + c * y;
        }
        double* vp = basis.row(p).data();
        double* vq = basis.row(q).data();
        for (std::size_t i = 0; i < nb; ++i) {
          const double x = vp[i];
          const double y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
        norms[p] = dot(ap, ap, n);
        norms[q] = dot(aq, aq, n);
      }
    }
    if (!rotated) break;
  }
}

// Fills the rows of `basis` flagged in `missing` with unit vectors
// orthogonal to every other row (modified Gram-Schmidt, two passes).
void complete_orthonormal_rows(Matrix& basis, const std::vector<bool>& missing) {
  const std::size_t k = basis.rows();
  const std::size_t n = basis.cols();
  std::size_t candidate = 0;
  for (std::size_t r = 0; r < k; ++r) {
    if (!missing[r]) continue;
    std::vector<bool> filled(k);
    for (std::size_t i = 0; i < k; ++i) filled[i] = !missing[i] || i < r;
    for (; candidate < n; ++candidate) {
      std::vector<double> v(n, 0.0);
      v[candidate] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 0; i < k; ++i) {
          if (!filled[i]) continue;
          auto b = basis.row(i);
          const double proj = dot(v.data(), b.data(), n);
          for (std::size_t j = 0; j < n; ++j) v[j] -= proj * b[j];
        }
      }
      const double norm = std::sqrt(dot(v.data(), v.data(), n));
      if (norm > 0.5) {
        auto dst = basis.row(r);
        for (std::size_t j = 0; j < n; ++j) dst[j] = v[j] / norm;
        ++candidate;
        break;
      }
    }
  }
}

// SVD of a matrix given as its transpose-free "tall" form: w is M x N, M >= N.
SvdFactors svd_tall(const Matrix& w) {
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  Matrix cols = w.transpose();  // row i = column i of w
  Matrix v_rows = Matrix::identity(n);
  jacobi_orthogonalize(cols, v_rows);

  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = cols.row(i);
    norms[i] = std::sqrt(dot(r.data(), r.data(), m));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

  Matrix u_rows(n, m);
  Matrix v_sorted(n, n);
  std::vector<double> sigma(n);
  std::vector<bool> missing(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = order[k];
    sigma[k] = norms[src];
    auto dst_v = v_sorted.row(k);
    auto src_v = v_rows.row(src);
    std::copy(src_v.begin(), src_v.end(), dst_v.begin());
    if (norms[src] > 0.0 && std::isfinite(1.0 / norms[src])) {
      auto dst_u = u_rows.row(k);
      auto src_u = cols.row(src);
      for (std::size_t j = 0; j < m; ++j) dst_u[j] = src_u[j] / norms[src];
    } else {
      sigma[k] = 0.0;
      missing[k] = true;
    }
  }
  complete_orthonormal_rows(u_rows, missing);

  // Sign convention: largest-magnitude entry of each u column is positive.
  for (std::size_t k = 0; k < n; ++k) {
    auto ur = u_rows.row(k);
    std::size_t arg = 0;
    for (std::size_t j = 1; j < m; ++j) {
      if (std::abs(ur[j]) > std::abs(ur[arg])) arg = j;
    }
    if (ur[arg] < 0.0) {
      for (double& x : ur) x = -x;
      for (double& x : v_sorted.row(k)) x = -x;
    }
  }
  return SvdFactors{u_rows.transpose(), std::move(sigma), v_sorted.transpose()};
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_((require_positive(rows, cols), rows * cols), fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require_positive(rows, cols);
  if (data_.size() != rows * cols) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
  Matrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::gaussian(std::size_t rows, std::size_t cols, double stddev, SeededRng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.data_) x = rng.normal(0.0, stddev);
  return m;
}

std::vector<double> Matrix::col(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

void Matrix::set_col(std::size_t c, std::span<const double> values) {
  if (values.size() != rows_) throw ShapeError("set_col: length mismatch");
  for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

Matrix Matrix::transpose() const {
  if (empty()) return {};
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  }
  return t;
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix& Matrix::operator+=(const Matrix& rhs) {
  require_same_shape(*this, rhs, "add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& rhs) {
  require_same_shape(*this, rhs, "subtract");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
  for (double& x : data_) x *= s;
  return *this;
}

Matrix operator+(Matrix lhs, const Matrix& rhs) { return lhs += rhs; }
Matrix operator-(Matrix lhs, const Matrix& rhs) { return lhs -= rhs; }
Matrix operator*(Matrix m, double s) { return m *= s; }
Matrix operator*(double s, Matrix m) { return m *= s; }

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_pair(a, b));
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimension mismatch " + shape_pair(a, b));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix c(m, n);
  const double* bp = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c.row(i).data();
    const double* ai = a.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bk = bp + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bk[j];
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row mismatch " + shape_pair(a, b));
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  Matrix c(m, n);
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a.row(p).data();
    const double* bp = b.row(p).data();
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      if (api == 0.0) continue;
      double* ci = c.row(i).data();
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column mismatch " + shape_pair(a, b));
  const std::size_t m = a.rows(), n = b.rows(), k = a.cols();
  Matrix c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a.row(i).data();
    for (std::size_t j = 0; j < n; ++j) c(i, j) = dot(ai, b.row(j).data(), k);
  }
  return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] *= bd[i];
  return c;
}

Matrix select_columns(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(m.rows(), indices.size());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] >= m.cols()) throw ShapeError("select_columns: index out of range");
      out(r, k) = m(r, indices[k]);
    }
  }
  return out;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= m.rows()) throw ShapeError("select_rows: index out of range");
    auto src = m.row(indices[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

double frobenius_norm_sq(const Matrix& m) {
  double s = 0.0;
  for (double x : m.data()) s += x * x;
  return s;
}

double frobenius_norm(const Matrix& m) { return std::sqrt(frobenius_norm_sq(m)); }

double max_abs(const Matrix& m) {
  double s = 0.0;
  for (double x : m.data()) s = std::max(s, std::abs(x));
  return s;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double s = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) s = std::max(s, std::abs(ad[i] - bd[i]));
  return s;
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](double x) { return std::isfinite(x); });
}

SvdFactors svd(const Matrix& w) {
  if (w.empty()) throw InvalidInputError("svd: empty matrix");
  if (!all_finite(w)) throw InvalidInputError("svd: input has non-finite entries");
  if (w.rows() >= w.cols()) return svd_tall(w);
  // W^T = U' S V'^T  =>  W = V' S U'^T; re-sign so u keeps the convention.
  SvdFactors t = svd_tall(w.transpose());
  SvdFactors f{std::move(t.v), std::move(t.sigma), std::move(t.u)};
  for (std::size_t k = 0; k < f.sigma.size(); ++k) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < f.u.rows(); ++j) {
      if (std::abs(f.u(j, k)) > std::abs(f.u(arg, k))) arg = j;
    }
    if (f.u(arg, k) < 0.0) {
      for (std::size_t j = 0; j < f.u.rows(); ++j) f.u(j, k) = -f.u(j, k);
      for (std::size_t j = 0; j < f.v.rows(); ++j) f.v(j, k) = -f.v(j, k);
    }
  }
  return f;
}

std::vector<double> singular_values(const Matrix& w) { return svd(w).sigma; }

Matrix reconstruct(const SvdFactors& f) { return truncate(f, f.sigma.size()); }

Matrix truncate(const SvdFactors& f, std::size_t rank) {
  rank = std::min(rank, f.sigma.size());
  Matrix us(f.u.rows(), f.sigma.size());
  for (std::size_t r = 0; r < f.u.rows(); ++r) {
    for (std::size_t k = 0; k < rank; ++k) us(r, k) = f.u(r, k) * f.sigma[k];
  }
  return matmul_nt(us, f.v);
}

std::size_t numerical_rank(std::span<const double> sigma, double rel_tol) {
  if (sigma.empty()) return 0;
  const double top = *std::max_element(sigma.begin(), sigma.end());
  if (top <= 0.0) return 0;
  return static_cast<std::size_t>(
      std::count_if(sigma.begin(), sigma.end(), [&](double s) { return s > rel_tol * top; }));
}

std::size_t numerical_rank(const Matrix& m, double rel_tol) {
  return numerical_rank(singular_values(m), rel_tol);
}

IndexSubset sample_indices(std::size_t count, std::size_t bound, SamplingScheme scheme,
                           SeededRng& rng) {
  if (count == 0 || count > bound) throw RankTooLargeError(count, bound);
  IndexSubset out;
  out.indices.resize(count);
  switch (scheme) {
    case SamplingScheme::Top:
      std::iota(out.indices.begin(), out.indices.end(), std::size_t{0});
      break;
    case SamplingScheme::Bottom:
      std::iota(out.indices.begin(), out.indices.end(), bound - count);
      break;
    case SamplingScheme::Random: {
      std::vector<std::size_t> all(bound);
      std::iota(all.begin(), all.end(), std::size_t{0});
      std::sample(all.begin(), all.end(), out.indices.begin(), count, rng.engine());
      break;
    }
  }
  return out;
}

namespace {

SvdFactors full_rank_svd(const Matrix& x, const char* what) {
  if (x.rows() < x.cols()) {
    throw SingularMatrixError(std::string(what) + ": " + x.shape_string() +
                                  " cannot have full column rank",
                              0.0);
  }
  SvdFactors f = svd(x);
  const double smallest = f.sigma.back();
  if (!(smallest > kFullRankTolerance * f.sigma.front())) {
    std::ostringstream msg;
    msg << what << ": matrix is rank deficient (smallest singular value " << smallest
        << ", largest " << f.sigma.front() << ")";
    throw SingularMatrixError(msg.str(), smallest);
  }
  return f;
}

}  // namespace

Matrix projection_onto_range(const Matrix& x) {
  SvdFactors f = full_rank_svd(x, "projection_onto_range");
  return matmul_nt(f.u, f.u);
}

Matrix least_squares(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) throw ShapeError("least_squares: row mismatch " + shape_pair(x, y));
  SvdFactors f = full_rank_svd(x, "least_squares");
  Matrix uty = matmul_tn(f.u, y);  // d x p
  for (std::size_t k = 0; k < f.sigma.size(); ++k) {
    for (double& v : uty.row(k)) v /= f.sigma[k];
  }
  return matmul(f.v, uty);
}

}  // namespace rosa
