// Command-line driver for synthetic fine-tuning experiments.
//
//   rosa train    --config run.json --out runs/a
//   rosa theorem  --out runs/theorem
//   rosa spectrum runs/a/initial.rsa1 runs/a/model.rsa1 --out runs/a
//   rosa ablate   --rank 12 --out runs/ablate
//   rosa schemes  --rank 12 --out runs/schemes

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rosa/checkpoint.hpp"
#include "rosa/config.hpp"
#include "rosa/errors.hpp"
#include "rosa/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rosa;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumeric = 3, kIo = 4 };

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<std::size_t> rank;
  std::optional<std::size_t> factorize_every;
  std::optional<std::string> factorize_unit;
  std::optional<std::string> scheme;
  std::optional<std::string> ablation;
  std::optional<double> lr;
  std::optional<std::size_t> epochs;
  std::string out = ".";
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON file with training and synthetic settings");
  cmd->add_option("--seed", o.seed, "Run seed");
  cmd->add_option("--out", o.out, "Output directory");
}

void add_training(CLI::App* cmd, Overrides& o, bool with_method) {
  if (with_method) cmd->add_option("--method", o.method, "ft, lora, rosa or ia3");
  cmd->add_option("--rank", o.rank, "Adapter rank");
  cmd->add_option("--factorize-every", o.factorize_every, "Factorization period");
  cmd->add_option("--factorize-unit", o.factorize_unit, "steps or epochs");
  cmd->add_option("--scheme", o.scheme, "random, top or bottom");
  cmd->add_option("--ablation", o.ablation, "svd_init_only, svd_init_factorize or full");
  cmd->add_option("--lr", o.lr, "Learning rate (grids: single value instead of the default grid)");
  cmd->add_option("--epochs", o.epochs, "Number of epochs");
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("invalid JSON in ") + path + ": " + e.what());
  }
}

struct Settings {
  TrainConfig train;
  SyntheticSpec synthetic;
  json raw = json::object();
};

Settings load_settings(const Overrides& o) {
  Settings s;
  if (!o.config_path.empty()) {
    s.raw = read_json(o.config_path);
    s.train = train_config_from_json(s.raw);
    if (s.raw.contains("synthetic")) s.synthetic = synthetic_spec_from_json(s.raw.at("synthetic"));
  }
  TrainConfig& c = s.train;
  if (o.seed) c.seed = *o.seed;
  if (o.method) {
    c.method = parse_method(*o.method);
    if (c.method != Method::ROSA && c.method != Method::LoRA && !o.rank) c.rank.reset();
  }
  if (o.rank) c.rank = *o.rank;
  if (o.factorize_every) c.factorize_every = *o.factorize_every;
  if (o.factorize_unit) c.factorize_unit = parse_factorize_unit(*o.factorize_unit);
  if (o.scheme) c.scheme = parse_scheme(*o.scheme);
  if (o.ablation) c.ablation = parse_ablation(*o.ablation);
  if (o.lr) c.learning_rate = *o.lr;
  if (o.epochs) c.epochs = *o.epochs;
  s.synthetic.validate();
  return s;
}

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  return fs::path(dir);
}

template <class Fn>
void write_file(const fs::path& path, Fn&& fill) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  fill(out);
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) {
  write_file(path, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

int cmd_train(const Overrides& o) {
  Settings s = load_settings(o);
  s.train.validate();
  const fs::path out = prepare_out(o.out);
  SyntheticTask task = generate_synthetic(s.synthetic);
  RunResult run = run_training(s.train, task);

  write_file(out / "metrics.csv", [&](std::ostream& os) { write_metrics_csv(os, run.records); });
  std::vector<LayerSpectrum> spectra = spectrum_report(run.initial, run.final_net);
  write_file(out / "spectrum.csv", [&](std::ostream& os) { write_spectrum_csv(os, spectra); });
  json summary = run_summary(s.train, s.synthetic, run);
  write_json(out / "summary.json", summary);
  save_checkpoint(run.initial, out / "initial.rsa1");
  save_checkpoint(run.final_net, out / "model.rsa1");

  const auto& last = run.records.back();
  std::printf("%s: %zu epochs, final train %.6g, val %.6g, trainable %zu\n",
              std::string(to_string(s.train.method)).c_str(), last.epoch, last.train_loss, last.val_loss,
              last.trainable_param_count);
  if (summary.contains("rank_bound_holds") && !summary["rank_bound_holds"].get<bool>()) {
    std::fprintf(stderr, "error: LoRA residual rank %zu exceeds adapter rank %zu\n",
                 max_residual_rank(run.records), *s.train.rank);
    return kNumeric;
  }
  return kOk;
}

int cmd_theorem(const Overrides& o, const std::vector<std::size_t>& ranks, std::size_t n_seeds, double noise) {
  TheoremSuiteParams p;
  if (!o.config_path.empty()) {
    json j = read_json(o.config_path);
    for (const auto& [key, value] : j.items()) {
      try {
        if (key == "n") p.n = value.get<std::size_t>();
        else if (key == "d") p.d = value.get<std::size_t>();
        else if (key == "p") p.p = value.get<std::size_t>();
        else if (key == "residual_rank") p.residual_rank = value.get<std::size_t>();
        else if (key == "ranks") p.ranks = value.get<std::vector<std::size_t>>();
        else if (key == "seeds") p.seeds = value.get<std::vector<std::uint64_t>>();
        else if (key == "orthogonal_noise") p.orthogonal_noise = value.get<double>();
        else throw ConfigError(key, "unknown field");
      } catch (const json::exception& e) {
        throw ConfigError(key, e.what());
      }
    }
  }
  if (!ranks.empty()) p.ranks = ranks;
  if (o.rank) p.ranks = {*o.rank};
  const std::uint64_t first = o.seed.value_or(p.seeds.empty() ? 0 : p.seeds.front());
  if (n_seeds > 0 || o.seed) {
    p.seeds.clear();
    for (std::size_t i = 0; i < std::max<std::size_t>(n_seeds, 1); ++i) p.seeds.push_back(first + i);
  }
  if (noise > 0.0) p.orthogonal_noise = noise;
  if (p.seeds.empty() || p.ranks.empty()) throw ConfigError(p.seeds.empty() ? "seeds" : "ranks", "must not be empty");
  for (std::size_t r : p.ranks) {
    if (r == 0 || r > std::min(p.d, p.p)) throw ConfigError("ranks", "rank " + std::to_string(r) + " infeasible");
  }
  if (p.residual_rank > std::min(p.d, p.p) || p.n < p.d) {
    throw ConfigError("residual_rank", "instance shape infeasible");
  }

  const fs::path out = prepare_out(o.out);
  std::vector<TheoremRow> rows = run_theorem_suite(p);
  write_file(out / "theorem.csv", [&](std::ostream& os) { write_theorem_csv(os, rows); });

  bool all_match = true;
  json jrows = json::array();
  std::printf("%6s %4s %6s %8s %12s %12s\n", "seed", "R", "T", "observed", "bound_gap", "match");
  for (const auto& r : rows) {
    all_match = all_match && r.steps_match && r.monotone && r.recurrence_match;
    std::printf("%6llu %4zu %6zu %8zu %12.3e %12s\n", static_cast<unsigned long long>(r.seed), r.rank,
                r.t_predicted, r.observed_step, r.bound_gap, r.steps_match ? "yes" : "no");
    jrows.push_back({{"seed", r.seed},
                     {"rank", r.rank},
                     {"t_predicted", r.t_predicted},
                     {"observed_step", r.observed_step},
                     {"steps_match", r.steps_match},
                     {"bound_gap", r.bound_gap}});
  }
  write_json(out / "summary.json", {{"n", p.n},
                                    {"d", p.d},
                                    {"p", p.p},
                                    {"residual_rank", p.residual_rank},
                                    {"orthogonal_noise", p.orthogonal_noise},
                                    {"all_match", all_match},
                                    {"rows", jrows}});
  return kOk;
}

int cmd_spectrum(const Overrides& o, const std::string& initial_path, const std::string& final_path) {
  Mlp initial = load_checkpoint(initial_path);
  Mlp final_net = load_checkpoint(final_path);
  std::vector<LayerSpectrum> spectra = spectrum_report(initial, final_net);
  const fs::path out = prepare_out(o.out);
  write_file(out / "spectrum.csv", [&](std::ostream& os) { write_spectrum_csv(os, spectra); });
  json layers = json::array();
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    std::printf("layer %zu: numerical rank %zu\n", i, spectra[i].numerical_rank);
    layers.push_back({{"layer", i}, {"numerical_rank", spectra[i].numerical_rank}});
  }
  write_json(out / "spectrum_summary.json", {{"initial", initial_path}, {"final", final_path}, {"layers", layers}});
  return kOk;
}

int run_grid_command(const Overrides& o, std::vector<GridPoint> points) {
  Settings s = load_settings(o);
  const std::vector<double> grid = o.lr ? std::vector<double>{*o.lr} : kDefaultLrGrid;
  for (auto& p : points) p.config.validate();
  const fs::path out = prepare_out(o.out);
  SyntheticTask task = generate_synthetic(s.synthetic);
  GridSummary summary = run_grid(points, grid, task);
  write_file(out / "grid.csv", [&](std::ostream& os) { write_grid_csv(os, summary); });
  json best = json::array();
  for (const auto& b : summary.best) {
    std::printf("%-22s best lr %-8.0e final val %.6g%s\n", b.label.c_str(), b.learning_rate, b.final_val_loss,
                b.diverged ? " (all diverged)" : "");
    best.push_back({{"label", b.label},
                    {"learning_rate", b.learning_rate},
                    {"final_val_loss", b.diverged ? json(nullptr) : json(b.final_val_loss)},
                    {"diverged", b.diverged}});
  }
  write_json(out / "summary.json", {{"base_config", to_json(s.train)},
                                    {"synthetic", to_json(s.synthetic)},
                                    {"lr_grid", grid},
                                    {"best", best}});
  return kOk;
}

std::vector<GridPoint> ablation_points(const Overrides& o) {
  TrainConfig base = load_settings(o).train;
  base.method = Method::ROSA;
  if (!base.rank) throw ConfigError("rank", "required for method rosa");
  std::vector<GridPoint> points;
  for (Ablation a : {Ablation::Full, Ablation::SvdInitFactorize, Ablation::SvdInitOnly}) {
    if (o.ablation && parse_ablation(*o.ablation) != a) continue;
    TrainConfig c = base;
    c.ablation = a;
    c.zero_init = false;
    points.push_back({std::string(to_string(a)), c});
  }
  return points;
}

std::vector<GridPoint> scheme_points(const Overrides& o) {
  TrainConfig base = load_settings(o).train;
  base.method = Method::ROSA;
  if (!base.rank) throw ConfigError("rank", "required for method rosa");
  std::vector<GridPoint> points;
  for (SamplingScheme sc : {SamplingScheme::Random, SamplingScheme::Top, SamplingScheme::Bottom}) {
    if (o.scheme && parse_scheme(*o.scheme) != sc) continue;
    TrainConfig c = base;
    c.scheme = sc;
    points.push_back({std::string(to_string(sc)), c});
  }
  return points;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank adapter fine-tuning experiments on synthetic data"};
  app.require_subcommand(1);

  Overrides o;
  auto* train = app.add_subcommand("train", "Train one configuration");
  add_common(train, o);
  add_training(train, o, true);

  std::vector<std::size_t> ranks;
  std::size_t n_seeds = 0;
  double noise = 0.0;
  auto* theorem = app.add_subcommand("theorem", "Exact subspace iteration on linear regression instances");
  add_common(theorem, o);
  theorem->add_option("--rank", o.rank, "Single adapter rank");
  theorem->add_option("--ranks", ranks, "Adapter ranks")->delimiter(',');
  theorem->add_option("--seeds", n_seeds, "Number of consecutive seeds starting at --seed");
  theorem->add_option("--noise", noise, "Scale of target noise orthogonal to range(X)");

  std::string initial_path, final_path;
  auto* spectrum = app.add_subcommand("spectrum", "Singular spectrum of the weight change between two checkpoints");
  spectrum->add_option("initial", initial_path, "Checkpoint before training")->required();
  spectrum->add_option("final", final_path, "Checkpoint after training")->required();
  spectrum->add_option("--out", o.out, "Output directory");

  auto* ablate = app.add_subcommand("ablate", "Compare initialization and resampling variants");
  add_common(ablate, o);
  add_training(ablate, o, false);

  auto* schemes = app.add_subcommand("schemes", "Compare subspace sampling schemes");
  add_common(schemes, o);
  add_training(schemes, o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*train) return cmd_train(o);
    if (*theorem) return cmd_theorem(o, ranks, n_seeds, noise);
    if (*spectrum) return cmd_spectrum(o, initial_path, final_path);
    if (*ablate) return run_grid_command(o, ablation_points(o));
    if (*schemes) return run_grid_command(o, scheme_points(o));
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const NumericFailure& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const Error& e) {
    // Infeasible ranks and shapes come from the settings.
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  }
  return kOk;
}
