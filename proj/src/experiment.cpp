#include "rosa/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <variant>

#include "rosa/adapters.hpp"
#include "rosa/errors.hpp"
#include "rosa/optim.hpp"

namespace rosa {

namespace {

void write_double(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

Matrix gather_columns(const Matrix& m, std::span<const std::size_t> cols) {
  Matrix out(m.rows(), cols.size());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto src = m.row(r);
    auto dst = out.row(r);
    for (std::size_t k = 0; k < cols.size(); ++k) dst[k] = src[cols[k]];
  }
  return out;
}

// Rank of a weight change, with the cutoff also scaled by the weight itself so
// round-off left by a factorization does not count.
std::size_t change_rank(const std::vector<double>& sigma, const Matrix& reference) {
  const double top = sigma.empty() ? 0.0 : sigma.front();
  const double cutoff = kResidualRankTolerance * std::max(top, frobenius_norm(reference));
  if (top <= cutoff) return 0;
  return static_cast<std::size_t>(
      std::count_if(sigma.begin(), sigma.end(), [&](double s) { return s > cutoff; }));
}

std::vector<std::size_t> residual_ranks(const Mlp& net) {
  std::vector<std::size_t> ranks;
  ranks.reserve(net.num_layers());
  for (const auto& layer : net.layers()) {
    const Matrix original = layer.original_weight();
    ranks.push_back(change_rank(singular_values(layer.effective_weight() - original), original));
  }
  return ranks;
}

class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& c) {
    if (c.optimizer == OptimizerKind::SGD) {
      state_ = SgdState{c.learning_rate};
    } else {
      state_ = AdamwState(AdamwConfig{c.learning_rate, c.beta1, c.beta2, c.epsilon, c.weight_decay});
    }
  }

  void step(std::span<const ParamRef> params, const GradientSet& grads) {
    if (auto* sgd = std::get_if<SgdState>(&state_)) {
      sgd_step(params, grads, *sgd);
    } else {
      adamw_step(params, grads, std::get<AdamwState>(state_));
    }
  }

  // Returns true when moment buffers were actually dropped.
  bool reset_layer(std::size_t layer) {
    if (auto* adam = std::get_if<AdamwState>(&state_)) {
      adam->reset_layer(layer);
      return true;
    }
    return false;
  }

 private:
  std::variant<SgdState, AdamwState> state_{SgdState{}};
};

}  // namespace

SyntheticTask generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SeededRng rng(spec.seed);
  SeededRng model_rng = rng.fork();
  SeededRng delta_rng = rng.fork();
  SeededRng data_rng = rng.fork();

  SyntheticTask task;
  task.pretrained = make_mlp(spec.layer_dims, spec.activation, model_rng);

  std::vector<DenseLayer> target_layers = task.pretrained.layers();
  const std::size_t r = spec.target_adapter_rank;
  if (r > 0) {
    for (auto& layer : target_layers) {
      auto& full = std::get<FullWeight>(layer.adapter);
      const std::size_t m = full.out_dim();
      const std::size_t n = full.in_dim();
      // Entries of P Q have the same variance 2/fan_in as the base weights.
      Matrix p = Matrix::gaussian(m, r, std::sqrt(1.0 / static_cast<double>(r)), delta_rng);
      Matrix q = Matrix::gaussian(r, n, std::sqrt(2.0 / static_cast<double>(n)), delta_rng);
      full.weight += matmul(p, q);
      full.original = full.weight;
    }
  }
  task.target = Mlp(std::move(target_layers));

  const double stddev = std::sqrt(spec.input_sigma);
  const std::size_t d_in = spec.layer_dims.front();
  task.x_train = Matrix::gaussian(d_in, spec.n_train, stddev, data_rng);
  task.x_val = Matrix::gaussian(d_in, spec.n_val, stddev, data_rng);
  task.y_train = forward(task.target, task.x_train).output;
  task.y_val = forward(task.target, task.x_val).output;
  return task;
}

Mlp adapt_network(const Mlp& pretrained, const TrainConfig& config, SeededRng& rng) {
  config.validate();
  std::vector<DenseLayer> layers;
  layers.reserve(pretrained.num_layers());
  for (const auto& src : pretrained.layers()) {
    const Matrix w = src.effective_weight();
    DenseLayer layer{FullWeight{w, w}, src.bias, src.activation};
    switch (config.method) {
      case Method::FT:
        break;
      case Method::LoRA:
        layer.adapter = lora_init(w, *config.rank, rng);
        break;
      case Method::IA3:
        layer.adapter = ia3_init(w);
        break;
      case Method::ROSA: {
        RosaInit mode = RosaInit::Factorized;
        if (config.zero_init) mode = RosaInit::Zero;
        if (config.effective_ablation() == Ablation::SvdInitOnly) mode = RosaInit::Additive;
        layer.adapter = rosa_init(w, *config.rank, config.scheme, rng, mode);
        break;
      }
    }
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

std::size_t max_residual_rank(const std::vector<MetricsRecord>& records) {
  std::size_t out = 0;
  for (const auto& rec : records)
    for (std::size_t r : rec.residual_rank) out = std::max(out, r);
  return out;
}

RunResult run_training(const TrainConfig& config, const SyntheticTask& task) {
  config.validate();
  SeededRng rng(config.seed);
  SeededRng init_rng = rng.fork();
  SeededRng shuffle_rng = rng.fork();
  SeededRng factor_rng = rng.fork();

  RunResult result;
  Mlp net = adapt_network(task.pretrained, config, init_rng);
  result.initial = net;

  Optimizer optimizer(config);
  const bool resamples = config.method == Method::ROSA && config.effective_ablation() == Ablation::Full;
  const std::size_t n_train = task.x_train.cols();
  const std::size_t batch = std::min(config.batch_size, n_train);

  auto factorize_all = [&]() {
    for (std::size_t i = 0; i < net.num_layers(); ++i) {
      auto* rosa = std::get_if<RosaAdapter>(&net.layer(i).adapter);
      if (rosa == nullptr) continue;
      *rosa = factorize_step(*rosa, factor_rng);
      if (config.reset_moments_on_factorize && optimizer.reset_layer(i)) ++result.moment_resets;
    }
    ++result.factorize_events;
  };

  std::vector<std::size_t> order(n_train);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

    double loss_sum = 0.0;
    std::size_t batches = 0;
    bool factorized = false;
    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t len = std::min(batch, n_train - start);
      std::span<const std::size_t> idx(order.data() + start, len);
      Matrix xb = gather_columns(task.x_train, idx);
      Matrix yb = gather_columns(task.y_train, idx);

      ForwardCache cache = forward(net, xb);
      const double loss = mse_loss(cache.output, yb);
      if (!std::isfinite(loss)) {
        throw NumericFailure("non-finite training loss at epoch " + std::to_string(epoch) +
                             ", step " + std::to_string(step + 1));
      }
      GradientSet grads = backward(net, cache, mse_loss_grad(cache.output, yb));
      auto params = net.trainable_parameters();
      optimizer.step(params, grads);
      ++step;
      for (std::size_t i = 0; i < net.num_layers(); ++i) {
        if (auto* rosa = std::get_if<RosaAdapter>(&net.layer(i).adapter)) ++rosa->steps_since_factorize;
      }
      loss_sum += loss;
      ++batches;

      if (resamples && config.factorize_unit == FactorizeUnit::Steps && step % config.factorize_every == 0) {
        factorize_all();
        factorized = true;
      }
    }
    if (resamples && config.factorize_unit == FactorizeUnit::Epochs && epoch % config.factorize_every == 0) {
      factorize_all();
      factorized = true;
    }

    MetricsRecord rec;
    rec.step = step;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.val_loss = mse_loss(forward(net, task.x_val).output, task.y_val);
    if (!std::isfinite(rec.val_loss)) {
      throw NumericFailure("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    rec.trainable_param_count = net.trainable_count();
    rec.residual_rank = residual_ranks(net);
    rec.factorize_event = factorized;
    result.records.push_back(std::move(rec));
  }
  result.final_net = std::move(net);
  return result;
}

std::vector<LayerSpectrum> spectrum_report(const Mlp& initial, const Mlp& final_net) {
  if (initial.num_layers() != final_net.num_layers()) {
    throw ShapeError("spectrum_report: " + std::to_string(initial.num_layers()) + " vs " +
                     std::to_string(final_net.num_layers()) + " layers");
  }
  std::vector<LayerSpectrum> out;
  for (std::size_t i = 0; i < initial.num_layers(); ++i) {
    Matrix w0 = initial.layer(i).effective_weight();
    Matrix w1 = final_net.layer(i).effective_weight();
    if (w0.rows() != w1.rows() || w0.cols() != w1.cols()) {
      throw ShapeError("spectrum_report: layer " + std::to_string(i) + " is " + w0.shape_string() +
                       " vs " + w1.shape_string());
    }
    LayerSpectrum s;
    s.sigma = singular_values(w1 - w0);
    const double total = std::accumulate(s.sigma.begin(), s.sigma.end(), 0.0);
    double running = 0.0;
    for (double v : s.sigma) {
      running += v;
      s.cumulative.push_back(total > 0.0 ? running / total : 0.0);
    }
    s.numerical_rank = change_rank(s.sigma, w0);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<LayerAccounting> parameter_accounting(const Mlp& net) {
  std::vector<LayerAccounting> out;
  for (const auto& layer : net.layers()) {
    LayerAccounting acc;
    acc.out_dim = layer.out_dim();
    acc.in_dim = layer.in_dim();
    acc.bias_params = layer.bias.size();
    acc.adapter_params = trainable_count(layer) - acc.bias_params;
    acc.full_params = acc.out_dim * acc.in_dim;
    acc.reduction = static_cast<double>(acc.full_params) / static_cast<double>(acc.adapter_params);
    out.push_back(acc);
  }
  return out;
}

std::vector<TheoremRow> run_theorem_suite(const TheoremSuiteParams& params) {
  std::vector<TheoremRow> rows;
  for (std::uint64_t seed : params.seeds) {
    oracle::RegressionProblem prob =
        oracle::realizable_instance(params.n, params.d, params.p, params.residual_rank, seed);
    if (params.orthogonal_noise > 0.0) {
      prob = oracle::with_orthogonal_noise(std::move(prob), params.orthogonal_noise, seed + 0x5eed);
    }
    const double y_norm_sq = std::max(frobenius_norm_sq(prob.y), std::numeric_limits<double>::min());
    for (std::size_t rank : params.ranks) {
      TheoremRow row;
      row.seed = seed;
      row.rank = rank;

      const std::size_t max_steps = (std::min(params.d, params.p) + rank - 1) / rank + 1;
      oracle::RosaTrace trace;
      try {
        trace = oracle::rosa_exact_iterate(prob, rank, max_steps);
      } catch (const NumericFailure&) {
        row.monotone = false;
        rows.push_back(row);
        continue;
      }
      row.t_predicted = trace.t_predicted;
      row.irreducible = trace.irreducible;
      for (std::size_t t = 0; t < trace.errors.size(); ++t) {
        const double excess = (trace.errors[t] - trace.irreducible) / y_norm_sq;
        if (excess <= kConvergedRelativeError) {
          row.converged = true;
          row.observed_step = t;
          row.rel_error_at_observed = excess;
          row.rel_error_before_observed =
              t > 0 ? (trace.errors[t - 1] - trace.irreducible) / y_norm_sq : 0.0;
          break;
        }
      }
      row.steps_match = row.converged && row.observed_step == row.t_predicted;
      for (std::size_t t = 1; t < trace.weights.size(); ++t) {
        Matrix closed = oracle::closed_form_iterate(prob, rank, t);
        if (frobenius_norm(closed - trace.weights[t]) > 1e-8) row.recurrence_match = false;
      }
      row.lora_bound = oracle::lora_error_lower_bound(prob, rank);
      oracle::LowRankUpdate best = oracle::rrr_optimum(prob, rank);
      row.rrr_error = oracle::fit_error(prob, prob.w0 + matmul(best.a, best.b));
      row.bound_gap = row.rrr_error - row.irreducible - row.lora_bound;
      rows.push_back(row);
    }
  }
  return rows;
}

GridSummary run_grid(const std::vector<GridPoint>& points, const std::vector<double>& lr_grid,
                     const SyntheticTask& task) {
  GridSummary summary;
  for (const auto& point : points) {
    GridResult best{point.label, 0.0, std::numeric_limits<double>::infinity(), true};
    for (double lr : lr_grid) {
      TrainConfig cfg = point.config;
      cfg.learning_rate = lr;
      GridResult res{point.label, lr, std::numeric_limits<double>::infinity(), false};
      try {
        RunResult run = run_training(cfg, task);
        res.final_val_loss = run.records.back().val_loss;
      } catch (const NumericFailure&) {
        res.diverged = true;
      }
      summary.runs.push_back(res);
      if (!res.diverged && res.final_val_loss < best.final_val_loss) best = res;
    }
    summary.best.push_back(best);
  }
  return summary;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRecord>& records) {
  const std::size_t layers = records.empty() ? 0 : records.front().residual_rank.size();
  os << "step,epoch,train_loss,val_loss,trainable_param_count,factorize_event";
  for (std::size_t i = 0; i < layers; ++i) os << ",residual_rank_" << i;
  os << '\n';
  for (const auto& r : records) {
    os << r.step << ',' << r.epoch << ',';
    write_double(os, r.train_loss);
    os << ',';
    write_double(os, r.val_loss);
    os << ',' << r.trainable_param_count << ',' << (r.factorize_event ? 1 : 0);
    for (std::size_t v : r.residual_rank) os << ',' << v;
    os << '\n';
  }
}

void write_spectrum_csv(std::ostream& os, const std::vector<LayerSpectrum>& spectra) {
  os << "layer,index,sigma,cumulative_fraction\n";
  for (std::size_t l = 0; l < spectra.size(); ++l) {
    for (std::size_t k = 0; k < spectra[l].sigma.size(); ++k) {
      os << l << ',' << k << ',';
      write_double(os, spectra[l].sigma[k]);
      os << ',';
      write_double(os, spectra[l].cumulative[k]);
      os << '\n';
    }
  }
}

void write_theorem_csv(std::ostream& os, const std::vector<TheoremRow>& rows) {
  os << "seed,rank,t_predicted,observed_step,converged,steps_match,rel_error_at_observed,"
        "rel_error_before_observed,irreducible,lora_bound,rrr_error,bound_gap,monotone,"
        "recurrence_match\n";
  for (const auto& r : rows) {
    os << r.seed << ',' << r.rank << ',' << r.t_predicted << ',' << r.observed_step << ','
       << r.converged << ',' << r.steps_match << ',';
    write_double(os, r.rel_error_at_observed);
    os << ',';
    write_double(os, r.rel_error_before_observed);
    os << ',';
    write_double(os, r.irreducible);
    os << ',';
    write_double(os, r.lora_bound);
    os << ',';
    write_double(os, r.rrr_error);
    os << ',';
    write_double(os, r.bound_gap);
    os << ',' << r.monotone << ',' << r.recurrence_match << '\n';
  }
}

void write_grid_csv(std::ostream& os, const GridSummary& summary) {
  os << "label,learning_rate,final_val_loss,diverged,best\n";
  for (const auto& r : summary.runs) {
    const bool is_best = std::any_of(summary.best.begin(), summary.best.end(), [&](const GridResult& b) {
      return !b.diverged && b.label == r.label && b.learning_rate == r.learning_rate;
    });
    os << r.label << ',';
    write_double(os, r.learning_rate);
    os << ',';
    write_double(os, r.final_val_loss);
    os << ',' << r.diverged << ',' << is_best << '\n';
  }
}

nlohmann::json run_summary(const TrainConfig& config, const SyntheticSpec& spec, const RunResult& result) {
  nlohmann::json j;
  j["config"] = to_json(config);
  j["synthetic"] = to_json(spec);
  j["epochs_run"] = result.records.size();
  if (!result.records.empty()) {
    const auto& last = result.records.back();
    j["final"] = {{"step", last.step},
                  {"train_loss", last.train_loss},
                  {"val_loss", last.val_loss},
                  {"residual_rank", last.residual_rank}};
  }
  j["trainable_param_count"] = result.final_net.trainable_count();
  j["max_residual_rank"] = max_residual_rank(result.records);
  if (config.method == Method::LoRA) j["rank_bound_holds"] = max_residual_rank(result.records) <= *config.rank;
  j["factorize_events"] = result.factorize_events;
  j["moment_resets"] = result.moment_resets;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& acc : parameter_accounting(result.final_net)) {
    layers.push_back({{"out_dim", acc.out_dim},
                      {"in_dim", acc.in_dim},
                      {"adapter_params", acc.adapter_params},
                      {"bias_params", acc.bias_params},
                      {"full_params", acc.full_params},
                      {"reduction", acc.reduction}});
  }
  j["layers"] = layers;
  return j;
}

}  // namespace rosa
