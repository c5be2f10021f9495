#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>

#include "rosa/linalg.hpp"
#include "rosa/network.hpp"

namespace rosa {

struct SgdState {
  double learning_rate = 1e-2;
};

struct AdamwConfig {
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-6;
  double weight_decay = 0.1;
};

/// AdamW with per-tensor moment buffers and step counters, created lazily
/// the first time a trainable tensor receives a gradient.
class AdamwState {
 public:
  struct Moments {
    Matrix first;
    Matrix second;
    std::uint64_t steps = 0;
  };

  explicit AdamwState(AdamwConfig config);

  const AdamwConfig& config() const noexcept { return config_; }
  // Drops the buffers of every tensor in `layer`; the next step starts fresh.
  void reset_layer(std::size_t layer);
  const Moments* moments(std::size_t layer, const std::string& name) const;
  std::size_t buffer_count() const noexcept { return moments_.size(); }

 private:
  friend void adamw_step(std::span<const ParamRef>, const GradientSet&, AdamwState&);

  AdamwConfig config_;
  std::map<std::pair<std::size_t, std::string>, Moments> moments_;
};

// p <- p - lr * g for every trainable tensor.
void sgd_step(std::span<const ParamRef> params, const GradientSet& grads, const SgdState& state);

// Decoupled weight decay, bias-corrected moments:
//   p <- p * (1 - lr * wd);  p <- p - lr * m_hat / (sqrt(v_hat) + eps)
void adamw_step(std::span<const ParamRef> params, const GradientSet& grads, AdamwState& state);

}  // namespace rosa
