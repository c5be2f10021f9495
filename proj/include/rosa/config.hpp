#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rosa/linalg.hpp"
#include "rosa/network.hpp"

namespace rosa {

enum class Method { FT, LoRA, ROSA, IA3 };
enum class FactorizeUnit { Steps, Epochs };
enum class Ablation { SvdInitOnly, SvdInitFactorize, Full };
enum class OptimizerKind { SGD, AdamW };

struct TrainConfig {
  Method method = Method::ROSA;
  // Required for LoRA and ROSA, rejected otherwise.
  std::optional<std::size_t> rank;
  std::size_t factorize_every = 1;
  FactorizeUnit factorize_unit = FactorizeUnit::Epochs;
  SamplingScheme scheme = SamplingScheme::Random;
  // ROSA only; Full when unset.
  std::optional<Ablation> ablation;
  // Start ROSA from A = B = 0 and first factorize after one period.
  bool zero_init = false;
  OptimizerKind optimizer = OptimizerKind::AdamW;
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-6;
  double weight_decay = 0.0;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  bool reset_moments_on_factorize = true;

  Ablation effective_ablation() const { return ablation.value_or(Ablation::Full); }
  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct SyntheticSpec {
  std::vector<std::size_t> layer_dims{64, 64, 64};
  Activation activation = Activation::Relu;
  std::size_t target_adapter_rank = 24;
  double input_sigma = 1.0;
  std::size_t n_train = 1024;
  std::size_t n_val = 512;
  std::uint64_t seed = 0;

  void validate() const;
};

std::string_view to_string(Method m);
std::string_view to_string(FactorizeUnit u);
std::string_view to_string(Ablation a);
std::string_view to_string(OptimizerKind o);
std::string_view to_string(SamplingScheme s);
std::string_view to_string(Activation a);

Method parse_method(std::string_view s);
FactorizeUnit parse_factorize_unit(std::string_view s);
Ablation parse_ablation(std::string_view s);
OptimizerKind parse_optimizer(std::string_view s);
SamplingScheme parse_scheme(std::string_view s);
Activation parse_activation(std::string_view s);

nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const SyntheticSpec& s);
// Overlays the keys present in `j` onto `base`; unknown keys are errors.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j, SyntheticSpec base = {});

// Learning-rate grid searched for every method.
inline const std::vector<double> kDefaultLrGrid{2e-2, 2e-3, 2e-4, 2e-5};

}  // namespace rosa
