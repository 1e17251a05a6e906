#include "lesionattn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "lesionattn/csv.hpp"

namespace lesionattn::analysis {

BinarizeMode parse_binarize_mode(std::string_view name) {
  if (name == "topk") return BinarizeMode::topk;
  if (name == "otsu") return BinarizeMode::otsu;
  throw Error("unknown binarization mode '" + std::string(name) + "' (expected topk or otsu)");
}

namespace {

double otsu_threshold(const std::vector<double>& values) {
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + sorted[i];
  // Cut between sorted[i-1] and sorted[i]; class 1 = values >= sorted[i].
  double best_var = -1.0;
  double best = sorted.back();
  for (std::size_t i = 1; i < n; ++i) {
    if (sorted[i] == sorted[i - 1]) continue;
    const double w0 = static_cast<double>(i), w1 = static_cast<double>(n - i);
    const double m0 = prefix[i] / w0, m1 = (prefix[n] - prefix[i]) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best_var) {
      best_var = between;
      best = sorted[i];
    }
  }
  return best;
}

}  // namespace

LesionMask binarize_attention(const guidance::AttentionMap& attn, BinarizeMode mode, std::size_t k) {
  if (attn.size() == 0) throw Error("empty attention map");
  LesionMask out(attn.rows, attn.cols);
  if (mode == BinarizeMode::topk) {
    if (k > attn.size()) throw Error("top-k larger than the attention map");
    std::vector<std::size_t> order(attn.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return attn.values[a] > attn.values[b]; });
    for (std::size_t i = 0; i < k; ++i) out.values[order[i]] = 1;
    return out;
  }
  const double t = otsu_threshold(attn.values);
  for (std::size_t i = 0; i < attn.size(); ++i) out.values[i] = attn.values[i] >= t ? 1 : 0;
  return out;
}

double iou(const LesionMask& a, const LesionMask& b) {
  if (!a.same_shape(b)) throw Error("iou: mask shapes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.values[i] != 0, y = b.values[i] != 0;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  if (uni == 0) throw Error("iou: both masks are empty");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double sample_sd(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

AlignmentStats aggregate_alignment(std::vector<AlignmentRecord> records) {
  if (records.empty()) throw Error("alignment stats need at least one record");
  std::sort(records.begin(), records.end(),
            [](const AlignmentRecord& a, const AlignmentRecord& b) { return a.source_id < b.source_id; });
  AlignmentStats stats;
  std::vector<double> all;
  std::map<std::pair<std::size_t, int>, std::vector<double>> by_stratum;
  for (const auto& r : records) {
    all.push_back(r.iou);
    by_stratum[{index_of(r.group), r.label}].push_back(r.iou);
  }
  stats.median = median(all);
  stats.sd = sample_sd(all);
  for (const auto& [key, values] : by_stratum) {
    stats.strata.push_back({static_cast<Group>(key.first), key.second, values.size(), median(values), sample_sd(values)});
  }
  stats.records = std::move(records);
  return stats;
}

AlignmentStats alignment_stats(const std::vector<AlignmentInput>& inputs, BinarizeMode mode) {
  std::vector<AlignmentRecord> records;
  records.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (!in.mask.same_shape(in.attention)) throw Error("sample '" + in.source_id + "': mask/attention shape mismatch");
    const auto k = count_nonzero(in.mask);
    if (k == 0) throw Error("sample '" + in.source_id + "': empty lesion mask");
    const LesionMask predicted = binarize_attention(in.attention, mode, k);
    records.push_back({in.source_id, in.group, in.label, iou(predicted, in.mask)});
  }
  return aggregate_alignment(std::move(records));
}

nlohmann::json to_json(const AlignmentStats& stats) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : stats.records) {
    records.push_back({{"source_id", r.source_id}, {"group", to_string(r.group)}, {"label", r.label}, {"iou", r.iou}});
  }
  nlohmann::json strata = nlohmann::json::array();
  for (const auto& s : stats.strata) {
    strata.push_back({{"group", to_string(s.group)},
                      {"label", s.label},
                      {"count", s.count},
                      {"median", s.median},
                      {"sd", s.sd}});
  }
  return {{"median", stats.median}, {"sd", stats.sd}, {"strata", strata}, {"records", records}};
}

AlignmentStats alignment_from_json(const nlohmann::json& j) {
  std::vector<AlignmentRecord> records;
  for (const auto& r : j.at("records")) {
    records.push_back({r.at("source_id").get<std::string>(), parse_group(r.at("group").get<std::string>()),
                       r.at("label").get<int>(), r.at("iou").get<double>()});
  }
  return aggregate_alignment(std::move(records));
}

void render_overlay(const Image& image, const guidance::AttentionMap& attn, const std::filesystem::path& out_path) {
  if (image.height != attn.rows || image.width != attn.cols) throw Error("overlay: image/attention shape mismatch");
  if (image.channels != 3) throw Error("overlay: expected a 3-channel image");
  const double peak = *std::max_element(attn.values.begin(), attn.values.end());
  cv::Mat gray(attn.rows, attn.cols, CV_8U);
  for (int r = 0; r < attn.rows; ++r) {
    for (int c = 0; c < attn.cols; ++c) {
      const double v = peak > 0.0 ? attn(r, c) / peak : 0.0;
      gray.at<std::uint8_t>(r, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  }
  cv::Mat heat;
  cv::applyColorMap(gray, heat, cv::COLORMAP_JET);
  cv::Mat blended(attn.rows, attn.cols, CV_8UC3);
  for (int y = 0; y < attn.rows; ++y) {
    for (int x = 0; x < attn.cols; ++x) {
      const auto& h = heat.at<cv::Vec3b>(y, x);
      auto& out = blended.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) {
        // BGR storage: blue is channel 0 of the Mat, channel 2 of the image.
        const double base = std::clamp(image.at(2 - c, y, x), 0.0f, 1.0f) * 255.0;
        out[c] = static_cast<std::uint8_t>(std::lround(0.5 * base + 0.5 * h[c]));
      }
    }
  }
  if (!cv::imwrite(out_path.string(), blended)) throw Error("cannot write overlay " + out_path.string());
}

namespace {

struct SweepPoint {
  double threshold;
  std::int64_t tp;
  std::int64_t fp;
};

std::vector<SweepPoint> sweep(const std::vector<double>& scores, const std::vector<int>& labels) {
  fairmetrics::GroupedPredictions check{scores, labels, std::vector<Group>(scores.size(), Group::male)};
  check.validate();
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<SweepPoint> points;
  std::int64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? tp : fp)++;
      ++j;
    }
    points.push_back({scores[order[i]], tp, fp});
    i = j;
  }
  if (tp == 0 || fp == 0) throw Error("curves need both positive and negative samples");
  return points;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& pts, const char* xname,
                     const char* yname) {
  csv::Table t;
  t.header = {"threshold", xname, yname};
  for (const auto& p : pts) {
    t.rows.push_back({std::isinf(p.threshold) ? (p.threshold > 0 ? "inf" : "-inf") : csv::format_double(p.threshold),
                      csv::format_double(p.x), csv::format_double(p.y)});
  }
  csv::write(path, t);
}

void draw_curve_png(const std::filesystem::path& path, const std::vector<CurvePoint>& pts, bool diagonal) {
  constexpr int size = 320, margin = 20;
  cv::Mat canvas(size, size, CV_8UC3, cv::Scalar(255, 255, 255));
  auto to_px = [&](double x, double y) {
    return cv::Point(margin + static_cast<int>(std::lround(x * (size - 2 * margin))),
                     size - margin - static_cast<int>(std::lround(y * (size - 2 * margin))));
  };
  cv::rectangle(canvas, to_px(0, 0), to_px(1, 1), cv::Scalar(0, 0, 0), 1);
  if (diagonal) cv::line(canvas, to_px(0, 0), to_px(1, 1), cv::Scalar(180, 180, 180), 1);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    cv::line(canvas, to_px(pts[i - 1].x, pts[i - 1].y), to_px(pts[i].x, pts[i].y), cv::Scalar(200, 80, 0), 2);
  }
  if (!cv::imwrite(path.string(), canvas)) throw Error("cannot write plot " + path.string());
}

}  // namespace

std::vector<CurvePoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  const auto points = sweep(scores, labels);
  const double pos = static_cast<double>(points.back().tp), neg = static_cast<double>(points.back().fp);
  std::vector<CurvePoint> out{{kInf, 0.0, 0.0}};
  for (const auto& p : points) out.push_back({p.threshold, static_cast<double>(p.fp) / neg, static_cast<double>(p.tp) / pos});
  out.push_back({-kInf, 1.0, 1.0});
  return out;
}

std::vector<CurvePoint> pr_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  const auto points = sweep(scores, labels);
  const double pos = static_cast<double>(points.back().tp);
  const double n = static_cast<double>(points.back().tp + points.back().fp);
  std::vector<CurvePoint> out{{kInf, 0.0, 1.0}};
  for (const auto& p : points) {
    out.push_back({p.threshold, static_cast<double>(p.tp) / pos, static_cast<double>(p.tp) / static_cast<double>(p.tp + p.fp)});
  }
  out.push_back({-kInf, 1.0, pos / n});
  return out;
}

CurveFiles plot_curves(const std::vector<double>& scores, const std::vector<int>& labels,
                       const std::filesystem::path& out_prefix) {
  const auto roc = roc_curve(scores, labels);
  const auto pr = pr_curve(scores, labels);
  if (out_prefix.has_parent_path()) std::filesystem::create_directories(out_prefix.parent_path());
  const std::string base = out_prefix.string();
  CurveFiles files{base + "_roc.csv", base + "_pr.csv", base + "_roc.png", base + "_pr.png"};
  write_curve_csv(files.roc_csv, roc, "fpr", "tpr");
  write_curve_csv(files.pr_csv, pr, "recall", "precision");
  draw_curve_png(files.roc_png, roc, true);
  draw_curve_png(files.pr_png, pr, false);
  return files;
}

std::string compare_intervals(std::string_view metric, std::string_view a_name, const fairmetrics::MeanInterval& a,
                              std::string_view b_name, const fairmetrics::MeanInterval& b) {
  const bool overlap = !(a.ci.high < b.ci.low || b.ci.high < a.ci.low);
  return fmt::format("{}: {} {:.3f} ({:.3f}-{:.3f}) vs {} {:.3f} ({:.3f}-{:.3f}); 95% seed CIs {} ({})", metric, a_name,
                     a.mean, a.ci.low, a.ci.high, b_name, b.mean, b.ci.low, b.ci.high,
                     overlap ? "overlap" : "do not overlap", overlap ? "not significant" : "significant");
}

}  // namespace lesionattn::analysis
