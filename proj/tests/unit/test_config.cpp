#include <doctest.h>

#include "rosa/config.hpp"
#include "rosa/errors.hpp"

using namespace rosa;
using nlohmann::json;

namespace {

std::string failing_field(const TrainConfig& c) {
  try {
    c.validate();
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

TrainConfig rosa_config(std::size_t rank) {
  TrainConfig c;
  c.rank = rank;
  return c;
}

}  // namespace

TEST_CASE("names round trip") {
  for (auto m : {Method::FT, Method::LoRA, Method::ROSA, Method::IA3}) CHECK(parse_method(to_string(m)) == m);
  for (auto s : {SamplingScheme::Random, SamplingScheme::Top, SamplingScheme::Bottom})
    CHECK(parse_scheme(to_string(s)) == s);
  for (auto a : {Ablation::SvdInitOnly, Ablation::SvdInitFactorize, Ablation::Full})
    CHECK(parse_ablation(to_string(a)) == a);
  for (auto u : {FactorizeUnit::Steps, FactorizeUnit::Epochs}) CHECK(parse_factorize_unit(to_string(u)) == u);
  for (auto o : {OptimizerKind::SGD, OptimizerKind::AdamW}) CHECK(parse_optimizer(to_string(o)) == o);
  for (auto a : {Activation::Identity, Activation::Relu}) CHECK(parse_activation(to_string(a)) == a);
  CHECK(parse_method("lora") == Method::LoRA);
  CHECK_THROWS_AS(parse_method("adapter"), ConfigError);
  CHECK_THROWS_AS(parse_scheme("middle"), ConfigError);
}

TEST_CASE("validation names the offending field") {
  CHECK(failing_field(rosa_config(4)).empty());
  CHECK(failing_field(TrainConfig{}) == "rank");

  TrainConfig ft;
  ft.method = Method::FT;
  CHECK(failing_field(ft).empty());
  ft.rank = 2;
  CHECK(failing_field(ft) == "rank");

  TrainConfig c = rosa_config(0);
  CHECK(failing_field(c) == "rank");
  c = rosa_config(2);
  c.factorize_every = 0;
  CHECK(failing_field(c) == "factorize_every");
  c = rosa_config(2);
  c.learning_rate = 0.0;
  CHECK(failing_field(c) == "learning_rate");
  c = rosa_config(2);
  c.beta2 = 1.0;
  CHECK(failing_field(c) == "beta2");
  c = rosa_config(2);
  c.epochs = 0;
  CHECK(failing_field(c) == "epochs");
  c = rosa_config(2);
  c.zero_init = true;
  c.ablation = Ablation::SvdInitOnly;
  CHECK(failing_field(c) == "zero_init");

  TrainConfig lora;
  lora.method = Method::LoRA;
  lora.rank = 2;
  lora.ablation = Ablation::Full;
  CHECK(failing_field(lora) == "ablation");
}

TEST_CASE("json overlay and round trip") {
  TrainConfig c = train_config_from_json(json::parse(R"({"method": "lora", "rank": 6, "learning_rate": 0.02,
                                                         "epochs": 3, "scheme": "top"})"));
  CHECK(c.method == Method::LoRA);
  CHECK(*c.rank == 6);
  CHECK(c.learning_rate == 0.02);
  CHECK(c.epochs == 3);
  CHECK(c.scheme == SamplingScheme::Top);
  CHECK(c.batch_size == TrainConfig{}.batch_size);

  TrainConfig back = train_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));

  TrainConfig r = rosa_config(3);
  r.ablation = Ablation::SvdInitFactorize;
  r.factorize_unit = FactorizeUnit::Steps;
  r.factorize_every = 7;
  CHECK(to_json(train_config_from_json(to_json(r))) == to_json(r));

  SyntheticSpec s;
  s.layer_dims = {10, 20, 5};
  s.target_adapter_rank = 3;
  CHECK(to_json(synthetic_spec_from_json(to_json(s))) == to_json(s));
}

TEST_CASE("json errors") {
  try {
    (void)train_config_from_json(json::parse(R"({"rnak": 4})"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "rnak");
  }
  try {
    (void)train_config_from_json(json::parse(R"({"epochs": "ten"})"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "epochs");
  }
  CHECK_THROWS_AS(train_config_from_json(json::parse("[1, 2]")), ConfigError);
  // Parsing only overlays; validation is a separate step.
  CHECK_THROWS_AS(synthetic_spec_from_json(json::parse(R"({"layer_dims": [4]})")).validate(), ConfigError);
  CHECK_THROWS_AS(
      synthetic_spec_from_json(json::parse(R"({"layer_dims": [4, 3], "target_adapter_rank": 4})")).validate(),
      ConfigError);
  CHECK_THROWS_AS(synthetic_spec_from_json(json::parse(R"({"n_train": -3})")), ConfigError);
  // The synthetic block may sit alongside training keys.
  CHECK_NOTHROW(train_config_from_json(json::parse(R"({"rank": 2, "synthetic": {"n_train": 8}})")));
}
