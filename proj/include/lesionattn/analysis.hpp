#pragma once

// Attention/lesion alignment, heatmap overlays and ROC/PR curve emission.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lesionattn/attention_guidance.hpp"
#include "lesionattn/fairmetrics.hpp"
#include "lesionattn/types.hpp"

namespace lesionattn::analysis {

enum class BinarizeMode { topk, otsu };

BinarizeMode parse_binarize_mode(std::string_view name);

/// topk marks the k largest entries (ties broken by lower flat index);
/// otsu thresholds at the between-class-variance maximizer and ignores k.
LesionMask binarize_attention(const guidance::AttentionMap& attn, BinarizeMode mode, std::size_t k = 0);

/// |a & b| / |a | b|. Throws on shape mismatch or an empty union.
double iou(const LesionMask& a, const LesionMask& b);

struct AlignmentRecord {
  std::string source_id;
  Group group = Group::male;
  int label = 0;
  double iou = 0.0;
};

struct StratumStats {
  Group group = Group::male;
  int label = 0;
  std::size_t count = 0;
  double median = 0.0;
  double sd = 0.0;
};

struct AlignmentStats {
  std::vector<AlignmentRecord> records;  // sorted by source_id
  double median = 0.0;
  double sd = 0.0;  // sample standard deviation (0 for a single record)
  std::vector<StratumStats> strata;  // (group, label) order, empty strata omitted
};

struct AlignmentInput {
  std::string source_id;
  Group group = Group::male;
  int label = 0;
  guidance::AttentionMap attention;
  LesionMask mask;
};

/// Binarizes each attention map (topk uses the paired mask's area) and
/// aggregates IoU.
AlignmentStats alignment_stats(const std::vector<AlignmentInput>& inputs, BinarizeMode mode = BinarizeMode::topk);

/// Recomputes median/sd/strata from the per-record values.
AlignmentStats aggregate_alignment(std::vector<AlignmentRecord> records);

double median(std::vector<double> values);
double sample_sd(const std::vector<double>& values);

nlohmann::json to_json(const AlignmentStats& stats);
AlignmentStats alignment_from_json(const nlohmann::json& j);

/// Attention divided by its max, JET-colorized and alpha-blended (0.5) over
/// the image; written as an 8-bit RGB PNG.
void render_overlay(const Image& image, const guidance::AttentionMap& attn, const std::filesystem::path& out_path);

struct CurvePoint {
  double threshold = 0.0;  // +inf / -inf for the two endpoints
  double x = 0.0;          // FPR or recall
  double y = 0.0;          // TPR or precision
};

/// Endpoint at +inf, one point per distinct score (descending), endpoint at
/// -inf.
std::vector<CurvePoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);
std::vector<CurvePoint> pr_curve(const std::vector<double>& scores, const std::vector<int>& labels);

struct CurveFiles {
  std::filesystem::path roc_csv;
  std::filesystem::path pr_csv;
  std::filesystem::path roc_png;
  std::filesystem::path pr_png;
};

/// Writes <prefix>_roc.csv/.png and <prefix>_pr.csv/.png.
CurveFiles plot_curves(const std::vector<double>& scores, const std::vector<int>& labels,
                       const std::filesystem::path& out_prefix);

/// States whether two 95% intervals overlap; used as the significance rule
/// in reports.
std::string compare_intervals(std::string_view metric, std::string_view a_name, const fairmetrics::MeanInterval& a,
                              std::string_view b_name, const fairmetrics::MeanInterval& b);

}  // namespace lesionattn::analysis
