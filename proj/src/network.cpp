#include "rosa/network.hpp"

#include <atomic>
#include <cmath>

#include "rosa/errors.hpp"

namespace rosa {

namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

void add_bias(Matrix& z, const Matrix& bias) {
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const double b = bias(r, 0);
    for (double& v : z.row(r)) v += b;
  }
}

Matrix row_sums(const Matrix& m) {
  Matrix out(m.rows(), 1);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (double v : m.row(r)) s += v;
    out(r, 0) = s;
  }
  return out;
}

}  // namespace

std::size_t DenseLayer::out_dim() const {
  return std::visit([](const auto& a) { return a.out_dim(); }, adapter);
}

std::size_t DenseLayer::in_dim() const {
  return std::visit([](const auto& a) { return a.in_dim(); }, adapter);
}

Matrix DenseLayer::effective_weight() const {
  return std::visit([](const auto& a) { return a.effective_weight(); }, adapter);
}

const Matrix& DenseLayer::original_weight() const {
  return std::visit(Overloaded{
                        [](const FullWeight& a) -> const Matrix& { return a.original; },
                        [](const LoraAdapter& a) -> const Matrix& { return a.w_frozen; },
                        [](const RosaAdapter& a) -> const Matrix& { return a.w_original; },
                        [](const Ia3Adapter& a) -> const Matrix& { return a.w_frozen; },
                    },
                    adapter);
}

const Matrix* GradientSet::find(std::size_t layer, std::string_view name) const {
  for (const auto& e : entries) {
    if (e.layer == layer && e.name == name) return &e.grad;
  }
  return nullptr;
}

std::uint64_t Mlp::next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

Mlp::Mlp(const Mlp& other) : layers_(other.layers_), id_(next_id()), version_(0) {}

Mlp& Mlp::operator=(const Mlp& other) {
  if (this != &other) {
    layers_ = other.layers_;
    ++version_;
  }
  return *this;
}

DenseLayer& Mlp::layer(std::size_t i) {
  ++version_;
  return layers_.at(i);
}

void Mlp::validate() const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.rows() != l.out_dim() || l.bias.cols() != 1) {
      throw ShapeError("layer " + std::to_string(i) + ": bias " + l.bias.shape_string() +
                       " does not match output width " + std::to_string(l.out_dim()));
    }
    if (i > 0 && layers_[i - 1].out_dim() != l.in_dim()) {
      throw ShapeError("layer " + std::to_string(i) + " expects " + std::to_string(l.in_dim()) +
                       " inputs but previous layer produces " +
                       std::to_string(layers_[i - 1].out_dim()));
    }
  }
}

std::size_t Mlp::in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
std::size_t Mlp::out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

std::vector<ParamRef> Mlp::trainable_parameters() {
  ++version_;
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& l = layers_[i];
    std::visit(Overloaded{
                   [&](FullWeight& a) { out.push_back({i, "weight", &a.weight}); },
                   [&](LoraAdapter& a) {
                     out.push_back({i, "a", &a.a});
                     out.push_back({i, "b", &a.b});
                   },
                   [&](RosaAdapter& a) {
                     out.push_back({i, "a", &a.a});
                     out.push_back({i, "b", &a.b});
                   },
                   [&](Ia3Adapter& a) { out.push_back({i, "scale", &a.scale}); },
               },
               l.adapter);
    out.push_back({i, "bias", &l.bias});
  }
  return out;
}

std::size_t trainable_count(const DenseLayer& layer) {
  const std::size_t adapter_count =
      std::visit(Overloaded{
                     [](const FullWeight& a) { return a.weight.size(); },
                     [](const auto& a) { return rosa::trainable_count(a); },
                 },
                 layer.adapter);
  return adapter_count + layer.bias.size();
}

std::size_t Mlp::trainable_count() const {
  std::size_t total = 0;
  for (const auto& l : layers_) total += rosa::trainable_count(l);
  return total;
}

Mlp make_mlp(const std::vector<std::size_t>& dims, Activation hidden, SeededRng& rng) {
  if (dims.size() < 2) throw InvalidInputError("make_mlp: need at least input and output widths");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::size_t fan_in = dims[i];
    Matrix w = Matrix::gaussian(dims[i + 1], fan_in, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
    DenseLayer layer{FullWeight{w, w}, Matrix(dims[i + 1], 1),
                     i + 2 == dims.size() ? Activation::Identity : hidden};
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

ForwardCache forward(const Mlp& net, const Matrix& x) {
  if (net.num_layers() == 0) throw InvalidInputError("forward: network has no layers");
  if (x.rows() != net.in_dim()) {
    throw ShapeError("forward: input " + x.shape_string() + " but network expects " +
                     std::to_string(net.in_dim()) + " rows");
  }
  ForwardCache cache;
  cache.network_id = net.id();
  cache.version = net.version();
  cache.layers.reserve(net.num_layers());
  Matrix current = x;
  for (const auto& layer : net.layers()) {
    LayerCache lc;
    lc.input = current;
    Matrix z = std::visit(Overloaded{
                              [&](const FullWeight& a) { return matmul(a.weight, current); },
                              [&](const LoraAdapter& a) {
                                lc.inner = matmul(a.b, current);
                                return matmul(a.w_frozen, current) + matmul(a.a, lc.inner);
                              },
                              [&](const RosaAdapter& a) {
                                lc.inner = matmul(a.b, current);
                                return matmul(a.w_fixed, current) + matmul(a.a, lc.inner);
                              },
                              [&](const Ia3Adapter& a) {
                                lc.inner = matmul(a.w_frozen, current);
                                Matrix out = lc.inner;
                                for (std::size_t r = 0; r < out.rows(); ++r) {
                                  for (double& v : out.row(r)) v *= a.scale(r, 0);
                                }
                                return out;
                              },
                          },
                          layer.adapter);
    add_bias(z, layer.bias);
    lc.pre_activation = z;
    if (layer.activation == Activation::Relu) {
      for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
    }
    current = std::move(z);
    cache.layers.push_back(std::move(lc));
  }
  cache.output = std::move(current);
  return cache;
}

double mse_loss(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target, "mse_loss");
  double s = 0.0;
  auto p = pred.data();
  auto t = target.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    s += d * d;
  }
  return s / static_cast<double>(p.size());
}

Matrix mse_loss_grad(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target, "mse_loss_grad");
  Matrix g = pred - target;
  g *= 2.0 / static_cast<double>(g.size());
  return g;
}

GradientSet backward(const Mlp& net, const ForwardCache& cache, const Matrix& loss_grad) {
  if (cache.network_id != net.id() || cache.version != net.version() ||
      cache.layers.size() != net.num_layers()) {
    throw ContractViolation("backward: forward cache is stale or from another network");
  }
  require_same_shape(loss_grad, cache.output, "backward");

  // Collected back to front, reversed at the end to match parameter order.
  std::vector<ParamGrad> reversed;
  Matrix upstream = loss_grad;
  for (std::size_t idx = net.num_layers(); idx-- > 0;) {
    const DenseLayer& layer = net.layer(idx);
    const LayerCache& lc = cache.layers[idx];
    Matrix gz = std::move(upstream);
    if (layer.activation == Activation::Relu) {
      auto g = gz.data();
      auto z = lc.pre_activation.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(z[i] > 0.0)) g[i] = 0.0;
      }
    }
    reversed.push_back({idx, "bias", row_sums(gz)});
    const bool need_input_grad = idx > 0;
    std::visit(Overloaded{
                   [&](const FullWeight& a) {
                     reversed.push_back({idx, "weight", matmul_nt(gz, lc.input)});
                     if (need_input_grad) upstream = matmul_tn(a.weight, gz);
                   },
                   [&](const LoraAdapter& a) {
                     Matrix at_g = matmul_tn(a.a, gz);  // R x batch
                     reversed.push_back({idx, "b", matmul_nt(at_g, lc.input)});
                     reversed.push_back({idx, "a", matmul_nt(gz, lc.inner)});
                     if (need_input_grad) upstream = matmul_tn(a.w_frozen, gz) + matmul_tn(a.b, at_g);
                   },
                   [&](const RosaAdapter& a) {
                     Matrix at_g = matmul_tn(a.a, gz);
                     reversed.push_back({idx, "b", matmul_nt(at_g, lc.input)});
                     reversed.push_back({idx, "a", matmul_nt(gz, lc.inner)});
                     if (need_input_grad) upstream = matmul_tn(a.w_fixed, gz) + matmul_tn(a.b, at_g);
                   },
                   [&](const Ia3Adapter& a) {
                     reversed.push_back({idx, "scale", row_sums(hadamard(gz, lc.inner))});
                     if (need_input_grad) {
                       Matrix scaled = gz;
                       for (std::size_t r = 0; r < scaled.rows(); ++r) {
                         for (double& v : scaled.row(r)) v *= a.scale(r, 0);
                       }
                       upstream = matmul_tn(a.w_frozen, scaled);
                     }
                   },
               },
               layer.adapter);
  }
  GradientSet out;
  out.entries.assign(std::make_move_iterator(reversed.rbegin()),
                     std::make_move_iterator(reversed.rend()));
  return out;
}

}  // namespace rosa
