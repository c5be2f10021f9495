#include "rosa/adapters.hpp"

#include <algorithm>
#include <cmath>

#include "rosa/errors.hpp"

namespace rosa {

namespace {

void check_rank(const Matrix& w, std::size_t rank) {
  if (w.empty()) throw InvalidInputError("adapter weight is empty");
  const std::size_t bound = std::min(w.rows(), w.cols());
  if (rank == 0 || rank > bound) throw RankTooLargeError(rank, bound);
}

void check_input(std::size_t in_dim, const Matrix& x, const char* what) {
  if (x.rows() != in_dim) {
    throw ShapeError(std::string(what) + ": input " + x.shape_string() + " needs " +
                     std::to_string(in_dim) + " rows");
  }
}

struct Slice {
  Matrix a;
  Matrix b;
};

Slice svd_slice(const Matrix& w, std::size_t rank, SamplingScheme scheme, SeededRng& rng) {
  SvdFactors f = svd(w);
  IndexSubset picked = sample_indices(rank, f.sigma.size(), scheme, rng);
  Matrix a = select_columns(f.u, picked.indices);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t k = 0; k < rank; ++k) a(r, k) *= f.sigma[picked.indices[k]];
  }
  Matrix b = select_columns(f.v, picked.indices).transpose();
  return {std::move(a), std::move(b)};
}

}  // namespace

Matrix RosaAdapter::effective_weight() const { return w_fixed + matmul(a, b); }
Matrix LoraAdapter::effective_weight() const { return w_frozen + matmul(a, b); }

Matrix Ia3Adapter::effective_weight() const {
  Matrix w = w_frozen;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (double& v : w.row(r)) v *= scale(r, 0);
  }
  return w;
}

RosaAdapter rosa_init(const Matrix& w, std::size_t rank, SamplingScheme scheme, SeededRng& rng,
                      RosaInit mode) {
  check_rank(w, rank);
  RosaAdapter adapter;
  adapter.w_original = w;
  adapter.rank = rank;
  adapter.scheme = scheme;
  switch (mode) {
    case RosaInit::Zero:
      adapter.w_fixed = w;
      adapter.a = Matrix(w.rows(), rank);
      adapter.b = Matrix(rank, w.cols());
      break;
    case RosaInit::Factorized: {
      Slice s = svd_slice(w, rank, scheme, rng);
      adapter.w_fixed = w - matmul(s.a, s.b);
      adapter.a = std::move(s.a);
      adapter.b = std::move(s.b);
      break;
    }
    case RosaInit::Additive: {
      Slice s = svd_slice(w, rank, scheme, rng);
      adapter.w_fixed = w;
      adapter.a = std::move(s.a);
      adapter.b = std::move(s.b);
      break;
    }
  }
  return adapter;
}

RosaAdapter factorize_step(const RosaAdapter& adapter, SeededRng& rng) {
  Matrix merged = adapter.effective_weight();
  Slice s = svd_slice(merged, adapter.rank, adapter.scheme, rng);
  RosaAdapter next;
  next.w_fixed = merged - matmul(s.a, s.b);
  next.a = std::move(s.a);
  next.b = std::move(s.b);
  next.w_original = adapter.w_original;
  next.rank = adapter.rank;
  next.scheme = adapter.scheme;
  next.steps_since_factorize = 0;
  return next;
}

Matrix rosa_forward(const RosaAdapter& adapter, const Matrix& x) {
  check_input(adapter.in_dim(), x, "rosa_forward");
  return matmul(adapter.w_fixed, x) + matmul(adapter.a, matmul(adapter.b, x));
}

LoraAdapter lora_init(const Matrix& w, std::size_t rank, SeededRng& rng) {
  check_rank(w, rank);
  LoraAdapter adapter;
  adapter.w_frozen = w;
  adapter.rank = rank;
  adapter.a = Matrix::gaussian(w.rows(), rank, std::sqrt(1.0 / static_cast<double>(rank)), rng);
  adapter.b = Matrix(rank, w.cols());
  return adapter;
}

Matrix lora_forward(const LoraAdapter& adapter, const Matrix& x) {
  check_input(adapter.in_dim(), x, "lora_forward");
  return matmul(adapter.w_frozen, x) + matmul(adapter.a, matmul(adapter.b, x));
}

Ia3Adapter ia3_init(const Matrix& w) {
  if (w.empty()) throw InvalidInputError("adapter weight is empty");
  return Ia3Adapter{w, Matrix(w.rows(), 1, 1.0)};
}

Matrix ia3_forward(const Ia3Adapter& adapter, const Matrix& x) {
  check_input(adapter.in_dim(), x, "ia3_forward");
  if (adapter.scale.rows() != adapter.out_dim() || adapter.scale.cols() != 1) {
    throw ShapeError("ia3_forward: scale " + adapter.scale.shape_string() + " vs weight " +
                     adapter.w_frozen.shape_string());
  }
  Matrix out = matmul(adapter.w_frozen, x);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const double s = adapter.scale(r, 0);
    for (double& v : out.row(r)) v *= s;
  }
  return out;
}

Matrix residual(const RosaAdapter& adapter) {
  return adapter.effective_weight() - adapter.w_original;
}

Matrix residual(const LoraAdapter& adapter) { return matmul(adapter.a, adapter.b); }

Matrix residual(const Ia3Adapter& adapter) {
  return adapter.effective_weight() - adapter.w_frozen;
}

double trainable_reduction(std::size_t m, std::size_t n, std::size_t rank) {
  if (m == 0 || n == 0 || rank == 0) throw InvalidInputError("trainable_reduction: sizes must be positive");
  const double md = static_cast<double>(m);
  const double nd = static_cast<double>(n);
  return (md * nd) / (static_cast<double>(rank) * (md + nd));
}

std::size_t trainable_count(const RosaAdapter& adapter) {
  return adapter.rank * (adapter.out_dim() + adapter.in_dim());
}

std::size_t trainable_count(const LoraAdapter& adapter) {
  return adapter.rank * (adapter.out_dim() + adapter.in_dim());
}

std::size_t trainable_count(const Ia3Adapter& adapter) { return adapter.out_dim(); }

}  // namespace rosa
