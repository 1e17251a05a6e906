#include "lesionattn/fairmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace lesionattn::fairmetrics {

namespace {

constexpr double kZ95 = 1.96;

void check_binary_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.empty()) throw Error("empty prediction set");
  if (scores.size() != labels.size()) throw Error("scores and labels differ in length");
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw Error("score outside [0,1]: " + std::to_string(s));
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw Error("label outside {0,1}: " + std::to_string(l));
  }
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

void GroupedPredictions::validate() const {
  check_binary_inputs(scores, labels);
  if (groups.size() != scores.size()) throw Error("groups and scores differ in length");
}

GroupRates group_rates(const GroupedPredictions& preds, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error("threshold outside [0,1]");
  preds.validate();

  GroupRates rates;
  rates.threshold = threshold;
  std::array<std::size_t, kGroupCount> seen{};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto g = index_of(preds.groups[i]);
    ++seen[g];
    const bool predicted = preds.scores[i] >= threshold;
    auto& c = rates.cells[g];
    if (preds.labels[i] == 1) {
      (predicted ? c.tp : c.fn)++;
    } else {
      (predicted ? c.fp : c.tn)++;
    }
  }
  for (Group g : {Group::male, Group::female}) {
    if (seen[index_of(g)] == 0) throw Error("group level '" + std::string(to_string(g)) + "' has no samples");
    const auto& c = rates.cells[index_of(g)];
    if (c.tp + c.fn > 0) rates.tpr[index_of(g)] = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (c.fp + c.tn > 0) rates.fpr[index_of(g)] = static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
  }
  return rates;
}

EqualizedOdds equalized_odds(const GroupRates& rates) {
  for (Group g : {Group::male, Group::female}) {
    const auto i = index_of(g);
    if (!rates.tpr[i]) throw Error("TPR undefined for group '" + std::string(to_string(g)) + "' (no positives)");
    if (!rates.fpr[i]) throw Error("FPR undefined for group '" + std::string(to_string(g)) + "' (no negatives)");
  }
  EqualizedOdds out;
  out.eo_tp = *rates.tpr[0] - *rates.tpr[1];
  out.eo_fp = *rates.fpr[0] - *rates.fpr[1];
  out.eo = std::max(std::abs(out.eo_tp), std::abs(out.eo_fp));
  return out;
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_binary_inputs(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks over tie blocks; rank sums are exact in double for any
  // realistic n, so the Mann-Whitney statistic carries no rounding drift.
  double pos_rank_sum = 0.0;
  std::int64_t n_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) {
        pos_rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j + 1;
  }
  const std::int64_t n_neg = static_cast<std::int64_t>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error("AUROC needs at least one positive and one negative sample");
  const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auroc(const GroupedPredictions& preds) { return auroc(preds.scores, preds.labels); }

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_binary_inputs(scores, labels);
  const std::size_t n = scores.size();
  const auto n_pos = std::count(labels.begin(), labels.end(), 1);
  if (n_pos == 0) throw Error("AUPRC needs at least one positive sample");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double area = 0.0;
  double prev_recall = 0.0;
  std::int64_t tp = 0;
  std::int64_t taken = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) tp += labels[order[k]];
    taken += static_cast<std::int64_t>(j - i + 1);
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(taken);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return area;
}

double auprc(const GroupedPredictions& preds) { return auprc(preds.scores, preds.labels); }

MeanInterval confidence_interval(const std::vector<double>& metric_values) {
  const std::size_t n = metric_values.size();
  if (n < 2) throw Error("confidence interval needs at least 2 values");
  const double mean = std::accumulate(metric_values.begin(), metric_values.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : metric_values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const double half = kZ95 * sd / std::sqrt(static_cast<double>(n));
  return {mean, {mean - half, mean + half}};
}

namespace {

struct PointMetrics {
  EqualizedOdds odds;
  double auroc = 0.0;
  double auprc = 0.0;
};

PointMetrics point_metrics(const GroupedPredictions& preds, double threshold) {
  PointMetrics m;
  m.odds = equalized_odds(group_rates(preds, threshold));
  m.auroc = auroc(preds);
  m.auprc = auprc(preds);
  return m;
}

std::map<std::string, double> as_map(const PointMetrics& m) {
  return {{"eo", m.odds.eo}, {"eo_tp", m.odds.eo_tp}, {"eo_fp", m.odds.eo_fp}, {"auroc", m.auroc}, {"auprc", m.auprc}};
}

}  // namespace

FairnessReport fairness_report(const GroupedPredictions& preds, double threshold, const ReportOptions& options) {
  const PointMetrics point = point_metrics(preds, threshold);

  FairnessReport report;
  report.threshold = threshold;
  report.eo = point.odds.eo;
  report.eo_tp = point.odds.eo_tp;
  report.eo_fp = point.odds.eo_fp;
  report.auroc = point.auroc;
  report.auprc = point.auprc;
  for (Group g : preds.groups) ++report.n_per_group[index_of(g)];

  const auto points = as_map(point);
  if (options.intervals == IntervalMode::none) {
    for (const auto& [name, v] : points) report.ci[name] = {v, v};
    return report;
  }

  if (options.bootstrap_rounds < 2) throw Error("bootstrap needs at least 2 rounds");
  // Resampling within each (group, label) cell keeps every rate defined.
  std::array<std::array<std::vector<std::size_t>, 2>, kGroupCount> cells;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    cells[index_of(preds.groups[i])][static_cast<std::size_t>(preds.labels[i])].push_back(i);
  }
  std::mt19937_64 rng(options.bootstrap_seed);
  std::map<std::string, std::vector<double>> draws;
  GroupedPredictions sample;
  for (int round = 0; round < options.bootstrap_rounds; ++round) {
    sample.scores.clear();
    sample.labels.clear();
    sample.groups.clear();
    for (const auto& by_label : cells) {
      for (const auto& cell : by_label) {
        if (cell.empty()) continue;
        std::uniform_int_distribution<std::size_t> pick(0, cell.size() - 1);
        for (std::size_t k = 0; k < cell.size(); ++k) {
          const std::size_t idx = cell[pick(rng)];
          sample.scores.push_back(preds.scores[idx]);
          sample.labels.push_back(preds.labels[idx]);
          sample.groups.push_back(preds.groups[idx]);
        }
      }
    }
    for (const auto& [name, v] : as_map(point_metrics(sample, threshold))) draws[name].push_back(v);
  }
  for (auto& [name, values] : draws) {
    std::sort(values.begin(), values.end());
    const double p = points.at(name);
    report.ci[name] = {std::min(p, quantile_sorted(values, 0.025)), std::max(p, quantile_sorted(values, 0.975))};
  }
  return report;
}

SeedSummary summarize_seeds(const std::vector<FairnessReport>& reports) {
  if (reports.size() < 2) throw Error("seed summary needs at least 2 reports");
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : reports) {
    values["eo"].push_back(r.eo);
    values["eo_tp"].push_back(r.eo_tp);
    values["eo_fp"].push_back(r.eo_fp);
    values["auroc"].push_back(r.auroc);
    values["auprc"].push_back(r.auprc);
  }
  SeedSummary out;
  out.n_runs = reports.size();
  for (const auto& [name, v] : values) out.metrics[name] = confidence_interval(v);
  return out;
}

GroupedPredictions relabel_groups(GroupedPredictions preds) {
  for (auto& g : preds.groups) g = other(g);
  return preds;
}

nlohmann::json to_json(const FairnessReport& report) {
  nlohmann::json ci = nlohmann::json::object();
  for (const auto& [name, iv] : report.ci) ci[name] = {iv.low, iv.high};
  return {
      {"eo", report.eo},
      {"eo_tp", report.eo_tp},
      {"eo_fp", report.eo_fp},
      {"auroc", report.auroc},
      {"auprc", report.auprc},
      {"ci", ci},
      {"n_per_group", {{"male", report.n_per_group[0]}, {"female", report.n_per_group[1]}}},
      {"threshold", report.threshold},
  };
}

FairnessReport report_from_json(const nlohmann::json& j) {
  FairnessReport r;
  try {
    r.eo = j.at("eo").get<double>();
    r.eo_tp = j.at("eo_tp").get<double>();
    r.eo_fp = j.at("eo_fp").get<double>();
    r.auroc = j.at("auroc").get<double>();
    r.auprc = j.at("auprc").get<double>();
    for (const auto& [name, iv] : j.at("ci").items()) r.ci[name] = {iv.at(0).get<double>(), iv.at(1).get<double>()};
    r.n_per_group[0] = j.at("n_per_group").at("male").get<std::int64_t>();
    r.n_per_group[1] = j.at("n_per_group").at("female").get<std::int64_t>();
    r.threshold = j.at("threshold").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed fairness report: ") + e.what());
  }
  return r;
}

nlohmann::json to_json(const SeedSummary& summary) {
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [name, m] : summary.metrics) {
    metrics[name] = {{"mean", m.mean}, {"ci", {m.ci.low, m.ci.high}}};
  }
  return {{"n_runs", summary.n_runs}, {"metrics", metrics}};
}

}  // namespace lesionattn::fairmetrics
