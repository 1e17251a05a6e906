#pragma once

// Grouped binary-classification metrics: per-group TPR/FPR, the equalized
// odds family, AUROC, AUPRC and interval estimates.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "lesionattn/types.hpp"

namespace lesionattn::fairmetrics {

struct GroupedPredictions {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<Group> groups;

  /// Checks equal nonzero lengths, scores in [0,1] and labels in {0,1}.
  void validate() const;
  [[nodiscard]] std::size_t size() const { return scores.size(); }
};

/// Confusion cells for one group at one threshold.
struct Confusion {
  std::int64_t tp = 0;
  std::int64_t fn = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
};

/// Per-group rates. A rate is empty when its denominator is zero.
struct GroupRates {
  std::array<std::optional<double>, kGroupCount> tpr;
  std::array<std::optional<double>, kGroupCount> fpr;
  std::array<Confusion, kGroupCount> cells;
  double threshold = 0.5;
};

struct EqualizedOdds {
  double eo = 0.0;
  double eo_tp = 0.0;  // TPR_male - TPR_female
  double eo_fp = 0.0;  // FPR_male - FPR_female
};

struct Interval {
  double low = 0.0;
  double high = 0.0;
  bool operator==(const Interval&) const = default;
};

struct FairnessReport {
  double eo = 0.0;
  double eo_tp = 0.0;
  double eo_fp = 0.0;
  double auroc = 0.0;
  double auprc = 0.0;
  std::map<std::string, Interval> ci;
  std::array<std::int64_t, kGroupCount> n_per_group{};
  double threshold = 0.5;
};

/// Prediction is positive when score >= threshold.
GroupRates group_rates(const GroupedPredictions& preds, double threshold = 0.5);

/// Throws naming the group and rate when any of the four rates is undefined.
EqualizedOdds equalized_odds(const GroupRates& rates);

/// Mann-Whitney probability that a random positive outscores a random
/// negative, ties counted one half.
double auroc(const GroupedPredictions& preds);
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Average precision over the descending-score sweep; tied scores form a
/// single operating point.
double auprc(const GroupedPredictions& preds);
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Normal-approximation 95% interval over repeat values:
/// mean +- 1.96 * sd / sqrt(n), sample standard deviation.
struct MeanInterval {
  double mean = 0.0;
  Interval ci;
};
MeanInterval confidence_interval(const std::vector<double>& metric_values);

enum class IntervalMode { none, bootstrap };

struct ReportOptions {
  IntervalMode intervals = IntervalMode::none;
  int bootstrap_rounds = 1000;
  std::uint64_t bootstrap_seed = 0;
};

/// Single-run report. With IntervalMode::none every interval collapses to
/// the point estimate; bootstrap mode resamples within each (group, label)
/// cell and reports percentile intervals widened to contain the point.
FairnessReport fairness_report(const GroupedPredictions& preds, double threshold = 0.5,
                               const ReportOptions& options = {});

/// Seed-repeat aggregate: per-metric mean and normal interval.
struct SeedSummary {
  std::map<std::string, MeanInterval> metrics;
  std::size_t n_runs = 0;
};
SeedSummary summarize_seeds(const std::vector<FairnessReport>& reports);

/// Swaps the two group levels.
GroupedPredictions relabel_groups(GroupedPredictions preds);

nlohmann::json to_json(const FairnessReport& report);
FairnessReport report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SeedSummary& summary);

}  // namespace lesionattn::fairmetrics
