#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rosa/adapters.hpp"
#include "rosa/linalg.hpp"
#include "rosa/rng.hpp"

namespace rosa {

/// Plain dense weight trained in full (the fine-tuning baseline).
struct FullWeight {
  Matrix weight;
  Matrix original;

  std::size_t out_dim() const noexcept { return weight.rows(); }
  std::size_t in_dim() const noexcept { return weight.cols(); }
  Matrix effective_weight() const { return weight; }
};

using LayerAdapter = std::variant<FullWeight, LoraAdapter, RosaAdapter, Ia3Adapter>;

enum class Activation { Identity, Relu };

struct DenseLayer {
  LayerAdapter adapter;
  Matrix bias;  // M x 1, always trainable
  Activation activation = Activation::Identity;

  std::size_t out_dim() const;
  std::size_t in_dim() const;
  Matrix effective_weight() const;
  // Weight the adapter was constructed from.
  const Matrix& original_weight() const;
};

/// Mutable handle on one trainable tensor of a network.
struct ParamRef {
  std::size_t layer;
  std::string_view name;
  Matrix* value;
};

struct ParamGrad {
  std::size_t layer;
  std::string name;
  Matrix grad;
};

/// Gradients for exactly the trainable tensors of a network, in the same
/// order as Mlp::trainable_parameters(). Frozen weights never appear.
struct GradientSet {
  std::vector<ParamGrad> entries;

  const Matrix* find(std::size_t layer, std::string_view name) const;
};

struct LayerCache {
  Matrix input;           // N x batch
  Matrix pre_activation;  // M x batch
  Matrix inner;           // b*x for low-rank adapters, w*x for IA3
};

struct ForwardCache {
  std::uint64_t network_id = 0;
  std::uint64_t version = 0;
  std::vector<LayerCache> layers;
  Matrix output;
};

/// Feed-forward network of dense layers; batches are columns.
///
/// Every mutation path (trainable_parameters(), layer()) bumps an internal
/// version so a forward cache taken before the mutation is rejected by
/// backward().
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);
  Mlp(const Mlp& other);
  Mlp& operator=(const Mlp& other);
  Mlp(Mlp&&) noexcept = default;
  Mlp& operator=(Mlp&&) noexcept = default;

  std::size_t num_layers() const noexcept { return layers_.size(); }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
  DenseLayer& layer(std::size_t i);
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  std::size_t in_dim() const;
  std::size_t out_dim() const;

  std::vector<ParamRef> trainable_parameters();
  std::size_t trainable_count() const;

  std::uint64_t id() const noexcept { return id_; }
  std::uint64_t version() const noexcept { return version_; }

 private:
  static std::uint64_t next_id();
  void validate() const;

  std::vector<DenseLayer> layers_;
  std::uint64_t id_ = next_id();
  std::uint64_t version_ = 0;
};

/// Random network with Gaussian(0, 2/fan_in) weights and zero biases.
/// dims = {d0, d1, ..., dL}; hidden layers use `hidden`, the last Identity.
Mlp make_mlp(const std::vector<std::size_t>& dims, Activation hidden, SeededRng& rng);

ForwardCache forward(const Mlp& net, const Matrix& x);

double mse_loss(const Matrix& pred, const Matrix& target);
// d(mse_loss)/d(pred).
Matrix mse_loss_grad(const Matrix& pred, const Matrix& target);

GradientSet backward(const Mlp& net, const ForwardCache& cache, const Matrix& loss_grad);

std::size_t trainable_count(const DenseLayer& layer);

}  // namespace rosa
