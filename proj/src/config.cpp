#include "rosa/config.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <type_traits>
#include <utility>

#include "rosa/errors.hpp"

namespace rosa {

namespace {

template <class E, std::size_t N>
E parse_enum(std::string_view field, std::string_view s,
             const std::array<std::pair<std::string_view, E>, N>& table) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (const auto& [name, value] : table) {
    if (lower == name) return value;
  }
  std::string allowed;
  for (const auto& [name, value] : table) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
  throw ConfigError(std::string(field), "unknown value '" + std::string(s) + "' (expected " + allowed + ")");
}

constexpr std::array<std::pair<std::string_view, Method>, 4> kMethods{{
    {"ft", Method::FT}, {"lora", Method::LoRA}, {"rosa", Method::ROSA}, {"ia3", Method::IA3}}};
constexpr std::array<std::pair<std::string_view, FactorizeUnit>, 2> kUnits{{
    {"steps", FactorizeUnit::Steps}, {"epochs", FactorizeUnit::Epochs}}};
constexpr std::array<std::pair<std::string_view, Ablation>, 3> kAblations{{
    {"svd_init_only", Ablation::SvdInitOnly},
    {"svd_init_factorize", Ablation::SvdInitFactorize},
    {"full", Ablation::Full}}};
constexpr std::array<std::pair<std::string_view, OptimizerKind>, 2> kOptimizers{{
    {"sgd", OptimizerKind::SGD}, {"adamw", OptimizerKind::AdamW}}};
constexpr std::array<std::pair<std::string_view, SamplingScheme>, 3> kSchemes{{
    {"random", SamplingScheme::Random}, {"top", SamplingScheme::Top}, {"bottom", SamplingScheme::Bottom}}};
constexpr std::array<std::pair<std::string_view, Activation>, 2> kActivations{{
    {"identity", Activation::Identity}, {"relu", Activation::Relu}}};

template <class E, std::size_t N>
std::string_view enum_name(E value, const std::array<std::pair<std::string_view, E>, N>& table) {
  for (const auto& [name, v] : table) {
    if (v == value) return name;
  }
  return "?";
}

template <class T>
T get_field(const nlohmann::json& j, const std::string& field) {
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!j.at(field).is_number_unsigned()) throw ConfigError(field, "expected a non-negative integer");
  }
  if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
    const auto& arr = j.at(field);
    if (!arr.is_array()) throw ConfigError(field, "expected an array of non-negative integers");
    for (const auto& v : arr) {
      if (!v.is_number_unsigned()) throw ConfigError(field, "expected an array of non-negative integers");
    }
  }
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(field, e.what());
  }
}

std::string get_string(const nlohmann::json& j, const std::string& field) {
  return get_field<std::string>(j, field);
}

}  // namespace

std::string_view to_string(Method m) { return enum_name(m, kMethods); }
std::string_view to_string(FactorizeUnit u) { return enum_name(u, kUnits); }
std::string_view to_string(Ablation a) { return enum_name(a, kAblations); }
std::string_view to_string(OptimizerKind o) { return enum_name(o, kOptimizers); }
std::string_view to_string(SamplingScheme s) { return enum_name(s, kSchemes); }
std::string_view to_string(Activation a) { return enum_name(a, kActivations); }

Method parse_method(std::string_view s) { return parse_enum("method", s, kMethods); }
FactorizeUnit parse_factorize_unit(std::string_view s) { return parse_enum("factorize_unit", s, kUnits); }
Ablation parse_ablation(std::string_view s) { return parse_enum("ablation", s, kAblations); }
OptimizerKind parse_optimizer(std::string_view s) { return parse_enum("optimizer", s, kOptimizers); }
SamplingScheme parse_scheme(std::string_view s) { return parse_enum("scheme", s, kSchemes); }
Activation parse_activation(std::string_view s) { return parse_enum("activation", s, kActivations); }

void TrainConfig::validate() const {
  const bool low_rank = method == Method::LoRA || method == Method::ROSA;
  if (low_rank && !rank) throw ConfigError("rank", "required for method " + std::string(to_string(method)));
  if (!low_rank && rank) throw ConfigError("rank", "not used by method " + std::string(to_string(method)));
  if (rank && *rank == 0) throw ConfigError("rank", "must be positive");
  if (method != Method::ROSA && ablation) throw ConfigError("ablation", "applies only to method rosa");
  if (method != Method::ROSA && zero_init) throw ConfigError("zero_init", "applies only to method rosa");
  if (zero_init && effective_ablation() != Ablation::Full) {
    throw ConfigError("zero_init", "requires ablation full (no factorization would ever happen)");
  }
  if (factorize_every == 0) throw ConfigError("factorize_every", "must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate", "must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2", "must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon", "must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay", "must be non-negative");
  if (epochs == 0) throw ConfigError("epochs", "must be positive");
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
}

void SyntheticSpec::validate() const {
  if (layer_dims.size() < 2) throw ConfigError("layer_dims", "need at least two widths");
  for (std::size_t d : layer_dims) {
    if (d == 0) throw ConfigError("layer_dims", "widths must be positive");
  }
  for (std::size_t i = 0; i + 1 < layer_dims.size(); ++i) {
    if (target_adapter_rank > std::min(layer_dims[i], layer_dims[i + 1])) {
      throw ConfigError("target_adapter_rank", "exceeds min width of layer " + std::to_string(i));
    }
  }
  if (!(input_sigma > 0.0)) throw ConfigError("input_sigma", "must be positive");
  if (n_train == 0) throw ConfigError("n_train", "must be positive");
  if (n_val == 0) throw ConfigError("n_val", "must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["method"] = to_string(c.method);
  j["rank"] = c.rank ? nlohmann::json(*c.rank) : nlohmann::json(nullptr);
  j["factorize_every"] = c.factorize_every;
  j["factorize_unit"] = to_string(c.factorize_unit);
  j["scheme"] = to_string(c.scheme);
  j["ablation"] = c.ablation ? nlohmann::json(to_string(*c.ablation)) : nlohmann::json(nullptr);
  j["zero_init"] = c.zero_init;
  j["optimizer"] = to_string(c.optimizer);
  j["learning_rate"] = c.learning_rate;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["weight_decay"] = c.weight_decay;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["reset_moments_on_factorize"] = c.reset_moments_on_factorize;
  return j;
}

nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"layer_dims", s.layer_dims},
          {"activation", to_string(s.activation)},
          {"target_adapter_rank", s.target_adapter_rank},
          {"input_sigma", s.input_sigma},
          {"n_train", s.n_train},
          {"n_val", s.n_val},
          {"seed", s.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("<root>", "expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "method") {
      c.method = parse_method(get_string(j, key));
    } else if (key == "rank") {
      c.rank = value.is_null() ? std::nullopt : std::optional(get_field<std::size_t>(j, key));
    } else if (key == "factorize_every") {
      c.factorize_every = get_field<std::size_t>(j, key);
    } else if (key == "factorize_unit") {
      c.factorize_unit = parse_factorize_unit(get_string(j, key));
    } else if (key == "scheme") {
      c.scheme = parse_scheme(get_string(j, key));
    } else if (key == "ablation") {
      c.ablation = value.is_null() ? std::nullopt : std::optional(parse_ablation(get_string(j, key)));
    } else if (key == "zero_init") {
      c.zero_init = get_field<bool>(j, key);
    } else if (key == "optimizer") {
      c.optimizer = parse_optimizer(get_string(j, key));
    } else if (key == "learning_rate") {
      c.learning_rate = get_field<double>(j, key);
    } else if (key == "beta1") {
      c.beta1 = get_field<double>(j, key);
    } else if (key == "beta2") {
      c.beta2 = get_field<double>(j, key);
    } else if (key == "epsilon") {
      c.epsilon = get_field<double>(j, key);
    } else if (key == "weight_decay") {
      c.weight_decay = get_field<double>(j, key);
    } else if (key == "epochs") {
      c.epochs = get_field<std::size_t>(j, key);
    } else if (key == "batch_size") {
      c.batch_size = get_field<std::size_t>(j, key);
    } else if (key == "seed") {
      c.seed = get_field<std::uint64_t>(j, key);
    } else if (key == "reset_moments_on_factorize") {
      c.reset_moments_on_factorize = get_field<bool>(j, key);
    } else if (key == "synthetic") {
      continue;  // handled by synthetic_spec_from_json
    } else {
      throw ConfigError(key, "unknown field");
    }
  }
  return c;
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j, SyntheticSpec s) {
  if (!j.is_object()) throw ConfigError("synthetic", "expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "layer_dims") {
      s.layer_dims = get_field<std::vector<std::size_t>>(j, key);
    } else if (key == "activation") {
      s.activation = parse_activation(get_string(j, key));
    } else if (key == "target_adapter_rank") {
      s.target_adapter_rank = get_field<std::size_t>(j, key);
    } else if (key == "input_sigma") {
      s.input_sigma = get_field<double>(j, key);
    } else if (key == "n_train") {
      s.n_train = get_field<std::size_t>(j, key);
    } else if (key == "n_val") {
      s.n_val = get_field<std::size_t>(j, key);
    } else if (key == "seed") {
      s.seed = get_field<std::uint64_t>(j, key);
    } else {
      throw ConfigError("synthetic." + key, "unknown field");
    }
  }
  return s;
}

}  // namespace rosa
