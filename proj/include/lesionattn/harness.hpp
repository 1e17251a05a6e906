#pragma once

// Training, grid search, candidate emission and evaluation for the three
// methods: plain attention network (baseline), mask-guided attention
// (lesion_attn) and mask-cropped input (lesion_only).

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lesionattn/data_pipeline.hpp"
#include "lesionattn/fairmetrics.hpp"
#include "lesionattn/pareto.hpp"
#include "lesionattn/rann_model.hpp"

namespace lesionattn::harness {

enum class Method { baseline, lesion_attn, lesion_only };
enum class StopMetric { auroc, loss };

Method parse_method(std::string_view name);
std::string_view to_string(Method method);
StopMetric parse_stop_metric(std::string_view name);
std::string_view to_string(StopMetric metric);

/// lr(step) = lr0 * factor^floor(step / every), step counted in optimizer
/// updates from 0.
struct LrSchedule {
  double initial = 1e-3;
  double factor = 0.99;
  int every = 10;

  [[nodiscard]] double at(std::int64_t step) const;
};

struct TrainConfig {
  Method method = Method::baseline;
  double learning_rate = 1e-3;
  double lambda_attn = 0.0;
  double rho = 0.7;
  int epochs = 100;
  int early_stop_patience = 10;
  double lr_decay_factor = 0.99;
  int lr_decay_every = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  int batch_size = 32;
  std::uint64_t seed = 0;
  StopMetric stop_metric = StopMetric::auroc;
  double threshold = 0.5;
  model::ModelConfig model;

  /// Enforces lambda_attn == 0 unless method is lesion_attn.
  void validate() const;
  [[nodiscard]] LrSchedule schedule() const { return {learning_rate, lr_decay_factor, lr_decay_every}; }
};

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_auroc = 0.0;
  double val_eo = 0.0;  // NaN when a group rate is undefined
  double val_loss = 0.0;
  double learning_rate = 0.0;  // rate used by the epoch's last update
};

enum class RunStatus { completed, early_stopped, aborted_non_finite };
std::string_view to_string(RunStatus status);

struct RunRecord {
  std::string id;
  TrainConfig config;
  std::vector<EpochMetrics> epoch_history;
  int best_epoch = -1;
  RunStatus status = RunStatus::completed;
  std::string diagnostic;
  std::int64_t optimizer_steps = 0;
  std::vector<double> lr_per_step;
  std::optional<fairmetrics::FairnessReport> validation_report;
  std::optional<fairmetrics::FairnessReport> test_report;
  std::optional<std::filesystem::path> best_checkpoint;
  /// Best-epoch model, kept in memory for evaluation.
  model::Rann model{nullptr};
};

struct TrainOptions {
  /// When set, the run persists config.json, metrics.csv, best.ckpt,
  /// last.ckpt, optimizer.pt, state.json and report.json here and resumes
  /// from an interrupted state found there.
  std::optional<std::filesystem::path> run_dir;
  bool resume = true;
  /// Stop after this many epochs of the current invocation (for resume
  /// tests); the run stays resumable.
  std::optional<int> max_epochs_this_call;
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// Minimizes BCE (plus lambda * attention loss for lesion_attn) with Adam
/// and a stepwise learning-rate decay, early stopping on the validation
/// metric. Masks are used for the loss (lesion_attn) or input crop
/// (lesion_only) and never at inference for the other methods.
RunRecord train(const TrainConfig& config, const data::DatasetSplit& split, const TrainOptions& options = {});

struct Predictions {
  std::vector<std::string> ids;
  fairmetrics::GroupedPredictions grouped;
  std::vector<guidance::AttentionMap> attention;  // filled on request
};

/// Forward pass over a dataset. lesion_only crops inputs with the masks
/// (and therefore requires them); other methods ignore masks entirely.
Predictions predict(model::Rann& model, Method method, const data::Dataset& dataset, bool keep_attention = false);

struct Evaluation {
  fairmetrics::FairnessReport report;
  Predictions predictions;
};

Evaluation evaluate(model::Rann& model, Method method, const data::Dataset& dataset, double threshold = 0.5,
                    const fairmetrics::ReportOptions& options = {});
/// Loads the checkpoint (which records its method) and evaluates.
Evaluation evaluate(const std::filesystem::path& checkpoint, const data::Dataset& dataset, double threshold = 0.5,
                    const fairmetrics::ReportOptions& options = {});

using Grid = std::map<std::string, std::vector<double>>;

struct GridResult {
  std::vector<RunRecord> records;
  /// Hyperparameter point (grid keys) with the highest mean best-epoch
  /// validation AUROC across seeds.
  std::map<std::string, double> best_point;
  double best_mean_val_auroc = 0.0;
  TrainConfig best_config;
};

/// Recognized keys: learning_rate, lambda_attn, rho, batch_size, epochs,
/// early_stop_patience. Seeds are base.seed, base.seed + 1, ...
GridResult grid_search(const Grid& grid, const TrainConfig& base, const data::DatasetSplit& split, int n_seeds,
                       const std::optional<std::filesystem::path>& root_dir = std::nullopt);

/// Picks the best configuration among finished records by mean validation
/// AUROC over seeds; exposed separately so it can be checked without
/// training.
GridResult choose_best(std::vector<RunRecord> records, const std::vector<std::string>& grid_keys);

/// Applies one grid point to a config. Throws on an unknown key.
TrainConfig apply_grid_point(TrainConfig config, const std::map<std::string, double>& point);

std::string run_id(const TrainConfig& config);
std::map<std::string, std::string> hyperparams_of(const TrainConfig& config);

/// One candidate per record: p_pred = validation AUROC, p_fair = 1 - EO.
std::vector<pareto::ModelCandidate> emit_candidates(const std::vector<RunRecord>& records);

/// Validation AUROC at the best epoch, or NaN if the record has no
/// history.
double best_val_auroc(const RunRecord& record);

/// Converts a dataset to [N,3,H,W] images and (if all present) [N,H,W]
/// masks.
struct TensorSet {
  torch::Tensor images;
  torch::Tensor masks;  // undefined if any mask is missing
  torch::Tensor labels;
};
TensorSet to_tensors(const data::Dataset& dataset);

}  // namespace lesionattn::harness
