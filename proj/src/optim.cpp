#include "rosa/optim.hpp"

#include <cmath>

#include "rosa/errors.hpp"

namespace rosa {

namespace {

void check_aligned(std::span<const ParamRef> params, const GradientSet& grads) {
  if (params.size() != grads.entries.size()) {
    throw ContractViolation("optimizer: " + std::to_string(grads.entries.size()) +
                            " gradients for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const auto& g = grads.entries[i];
    if (p.layer != g.layer || p.name != g.name) {
      throw ContractViolation("optimizer: gradient " + std::to_string(i) + " is for layer " +
                              std::to_string(g.layer) + "/" + g.name + ", parameter is layer " +
                              std::to_string(p.layer) + "/" + std::string(p.name));
    }
    if (p.value->rows() != g.grad.rows() || p.value->cols() != g.grad.cols()) {
      throw ContractViolation("optimizer: gradient shape " + g.grad.shape_string() +
                              " vs parameter " + p.value->shape_string() + " for layer " +
                              std::to_string(p.layer) + "/" + g.name);
    }
  }
}

}  // namespace

void sgd_step(std::span<const ParamRef> params, const GradientSet& grads, const SgdState& state) {
  if (!(state.learning_rate > 0.0)) throw InvalidInputError("sgd: learning rate must be positive");
  check_aligned(params, grads);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].value->data();
    auto g = grads.entries[i].grad.data();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= state.learning_rate * g[j];
  }
}

AdamwState::AdamwState(AdamwConfig config) : config_(config) {
  if (!(config_.learning_rate > 0.0)) throw InvalidInputError("adamw: learning rate must be positive");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) || !(config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw InvalidInputError("adamw: betas must lie in [0, 1)");
  }
  if (!(config_.epsilon > 0.0)) throw InvalidInputError("adamw: epsilon must be positive");
  if (!(config_.weight_decay >= 0.0)) throw InvalidInputError("adamw: weight decay must be non-negative");
}

void AdamwState::reset_layer(std::size_t layer) {
  for (auto it = moments_.begin(); it != moments_.end();) {
    it = it->first.first == layer ? moments_.erase(it) : std::next(it);
  }
}

const AdamwState::Moments* AdamwState::moments(std::size_t layer, const std::string& name) const {
  auto it = moments_.find({layer, name});
  return it == moments_.end() ? nullptr : &it->second;
}

void adamw_step(std::span<const ParamRef> params, const GradientSet& grads, AdamwState& state) {
  check_aligned(params, grads);
  const AdamwConfig& c = state.config_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& param = *params[i].value;
    const Matrix& grad = grads.entries[i].grad;
    auto [it, inserted] = state.moments_.try_emplace({params[i].layer, std::string(params[i].name)});
    auto& m = it->second;
    if (inserted) {
      m.first = Matrix(param.rows(), param.cols());
      m.second = Matrix(param.rows(), param.cols());
    }
    ++m.steps;
    const double t = static_cast<double>(m.steps);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    const double decay = 1.0 - c.learning_rate * c.weight_decay;

    auto p = param.data();
    auto g = grad.data();
    auto m1 = m.first.data();
    auto m2 = m.second.data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m1[j] = c.beta1 * m1[j] + (1.0 - c.beta1) * g[j];
      m2[j] = c.beta2 * m2[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m1[j] / bc1;
      const double v_hat = m2[j] / bc2;
      p[j] = p[j] * decay - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace rosa
