#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "rosa/config.hpp"
#include "rosa/linalg.hpp"
#include "rosa/network.hpp"
#include "rosa/oracle.hpp"

namespace rosa {

/// Pre-trained model, target model and i.i.d. samples y = target(x).
struct SyntheticTask {
  Mlp pretrained;
  Mlp target;
  Matrix x_train;  // d_in x n_train
  Matrix y_train;
  Matrix x_val;
  Matrix y_val;
};

/// Random network f plus a random rank-r matrix added in parallel to each
/// weight gives the target f*; inputs are N(0, sigma I).
SyntheticTask generate_synthetic(const SyntheticSpec& spec);

// Relative threshold for counting residual ranks in metrics and spectra.
inline constexpr double kResidualRankTolerance = 1e-8;

struct MetricsRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::size_t trainable_param_count = 0;
  std::vector<std::size_t> residual_rank;  // per layer
  bool factorize_event = false;
};

struct RunResult {
  std::vector<MetricsRecord> records;
  Mlp initial;  // adapted network before the first optimizer step
  Mlp final_net;
  std::size_t factorize_events = 0;
  std::size_t moment_resets = 0;
};

/// Wraps each dense layer of `pretrained` in the adapter chosen by `config`.
Mlp adapt_network(const Mlp& pretrained, const TrainConfig& config, SeededRng& rng);

/// Largest per-layer residual rank over all records.
std::size_t max_residual_rank(const std::vector<MetricsRecord>& records);

/// Minibatch training of the adapted pre-trained network on the task.
/// Throws NumericFailure when the loss stops being finite.
RunResult run_training(const TrainConfig& config, const SyntheticTask& task);

struct LayerSpectrum {
  std::vector<double> sigma;       // descending singular values of the residual
  std::vector<double> cumulative;  // running sum of sigma normalized by its total
  std::size_t numerical_rank = 0;
};

/// Singular spectrum of (final effective weight - initial effective weight)
/// for every layer.
std::vector<LayerSpectrum> spectrum_report(const Mlp& initial, const Mlp& final_net);

struct LayerAccounting {
  std::size_t out_dim = 0;
  std::size_t in_dim = 0;
  std::size_t adapter_params = 0;
  std::size_t bias_params = 0;
  std::size_t full_params = 0;
  double reduction = 0.0;  // full_params / adapter_params
};

std::vector<LayerAccounting> parameter_accounting(const Mlp& net);

// --- theorem suite ---------------------------------------------------------

struct TheoremSuiteParams {
  std::size_t n = 40;
  std::size_t d = 16;
  std::size_t p = 8;
  std::size_t residual_rank = 6;
  std::vector<std::size_t> ranks{1, 2, 3, 6};
  std::vector<std::uint64_t> seeds{0};
  // Scale of Y-noise orthogonal to range(X); 0 keeps the instance realizable.
  double orthogonal_noise = 0.0;
};

// Convergence means the excess error over the irreducible part is at most
// this fraction of ||Y||_F^2.
inline constexpr double kConvergedRelativeError = 1e-12;

struct TheoremRow {
  std::uint64_t seed = 0;
  std::size_t rank = 0;
  std::size_t t_predicted = 0;
  std::size_t observed_step = 0;  // first converged step, 0 if never
  bool converged = false;
  double rel_error_at_observed = 0.0;
  double rel_error_before_observed = 0.0;
  double irreducible = 0.0;
  double lora_bound = 0.0;
  double rrr_error = 0.0;
  double bound_gap = 0.0;  // rrr_error - irreducible - lora_bound
  bool monotone = true;
  bool recurrence_match = true;  // iterate vs closed-form recurrence within 1e-8
  bool steps_match = false;      // observed_step == t_predicted
};

std::vector<TheoremRow> run_theorem_suite(const TheoremSuiteParams& params);

// --- grids -----------------------------------------------------------------

struct GridPoint {
  std::string label;
  TrainConfig config;  // learning_rate is overwritten by the grid
};

struct GridResult {
  std::string label;
  double learning_rate = 0.0;
  double final_val_loss = 0.0;
  bool diverged = false;
};

struct GridSummary {
  std::vector<GridResult> runs;
  // Best (lowest final validation loss) run per label, in input order.
  std::vector<GridResult> best;
};

GridSummary run_grid(const std::vector<GridPoint>& points, const std::vector<double>& lr_grid,
                     const SyntheticTask& task);

// --- output ----------------------------------------------------------------

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRecord>& records);
void write_spectrum_csv(std::ostream& os, const std::vector<LayerSpectrum>& spectra);
void write_theorem_csv(std::ostream& os, const std::vector<TheoremRow>& rows);
void write_grid_csv(std::ostream& os, const GridSummary& summary);
nlohmann::json run_summary(const TrainConfig& config, const SyntheticSpec& spec,
                           const RunResult& result);

}  // namespace rosa
