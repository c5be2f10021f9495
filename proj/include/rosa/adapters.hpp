#pragma once

#include <cstddef>
#include <cstdint>

#include "rosa/linalg.hpp"
#include "rosa/rng.hpp"

namespace rosa {

/// How a ROSA adapter is set up before training starts.
enum class RosaInit {
  // Factorize immediately: w_fixed = W - AB with AB taken from the SVD of W.
  Factorized,
  // A = B = 0 and w_fixed = W until the first scheduled factorization.
  // Reproduces the literal zero initialization; no gradient flows until then.
  Zero,
  // AB from the SVD of W is added on top of an unchanged W (w_fixed = W).
  // Used by the "SVD init only" ablation; the initial function differs from W.
  Additive,
};

/// Random subspace adapter: effective weight is w_fixed + a * b with
/// a = U_R diag(sigma_R) and b = V_R^T for a sampled index subset.
struct RosaAdapter {
  Matrix w_fixed;     // M x N, frozen between factorizations
  Matrix a;           // M x R
  Matrix b;           // R x N
  Matrix w_original;  // weight at construction, kept for residual analysis
  std::size_t rank = 0;
  SamplingScheme scheme = SamplingScheme::Random;
  std::uint64_t steps_since_factorize = 0;

  std::size_t out_dim() const noexcept { return w_fixed.rows(); }
  std::size_t in_dim() const noexcept { return w_fixed.cols(); }
  Matrix effective_weight() const;
};

struct LoraAdapter {
  Matrix w_frozen;  // M x N
  Matrix a;         // M x R
  Matrix b;         // R x N
  std::size_t rank = 0;

  std::size_t out_dim() const noexcept { return w_frozen.rows(); }
  std::size_t in_dim() const noexcept { return w_frozen.cols(); }
  Matrix effective_weight() const;
};

/// Per-output-unit rescaling of a frozen dense layer.
struct Ia3Adapter {
  Matrix w_frozen;  // M x N
  Matrix scale;     // M x 1

  std::size_t out_dim() const noexcept { return w_frozen.rows(); }
  std::size_t in_dim() const noexcept { return w_frozen.cols(); }
  Matrix effective_weight() const;
};

RosaAdapter rosa_init(const Matrix& w, std::size_t rank, SamplingScheme scheme, SeededRng& rng,
                      RosaInit mode = RosaInit::Factorized);

/// Merge a*b into w_fixed, re-factorize the merged weight and split off a
/// freshly sampled rank-R slice. The effective weight is unchanged.
RosaAdapter factorize_step(const RosaAdapter& adapter, SeededRng& rng);

Matrix rosa_forward(const RosaAdapter& adapter, const Matrix& x);

LoraAdapter lora_init(const Matrix& w, std::size_t rank, SeededRng& rng);
Matrix lora_forward(const LoraAdapter& adapter, const Matrix& x);

Ia3Adapter ia3_init(const Matrix& w);
Matrix ia3_forward(const Ia3Adapter& adapter, const Matrix& x);

// Effective weight minus the weight the adapter was built from.
Matrix residual(const RosaAdapter& adapter);
Matrix residual(const LoraAdapter& adapter);
Matrix residual(const Ia3Adapter& adapter);

// Full-to-adapter trainable parameter ratio MN / (R (M + N)).
double trainable_reduction(std::size_t m, std::size_t n, std::size_t rank);

std::size_t trainable_count(const RosaAdapter& adapter);
std::size_t trainable_count(const LoraAdapter& adapter);
std::size_t trainable_count(const Ia3Adapter& adapter);

}  // namespace rosa
