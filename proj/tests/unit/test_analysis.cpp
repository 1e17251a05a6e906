#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <opencv2/imgcodecs.hpp>

#include "doctest.h"
#include "lesionattn/analysis.hpp"
#include "lesionattn/csv.hpp"
#include "lesionattn/fairmetrics.hpp"

using namespace lesionattn;
using namespace lesionattn::analysis;
namespace fs = std::filesystem;

namespace {

LesionMask mask_from(int rows, int cols, std::initializer_list<int> on) {
  LesionMask m(rows, cols, std::uint8_t{0});
  for (int i : on) m.values[static_cast<std::size_t>(i)] = 1;
  return m;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("iou") {
  const auto a = mask_from(2, 4, {0, 1, 2, 3});
  const auto b = mask_from(2, 4, {2, 3, 4, 5});
  CHECK(iou(a, b) == 2.0 / 6.0);
  CHECK(iou(b, a) == iou(a, b));
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, mask_from(2, 4, {6, 7})) == 0.0);
  CHECK_THROWS_AS(iou(LesionMask(2, 2), LesionMask(2, 2)), Error);
  CHECK_THROWS_AS(iou(a, LesionMask(4, 2, std::uint8_t{1})), Error);

  std::mt19937_64 rng(6);
  for (int i = 0; i < 200; ++i) {
    LesionMask x(5, 5), y(5, 5);
    for (auto& v : x.values) v = rng() % 2;
    for (auto& v : y.values) v = rng() % 2;
    x.values[0] = 1;
    CHECK(iou(x, y) == iou(y, x));
    CHECK(iou(x, x) == 1.0);
    CHECK((iou(x, y) >= 0.0 && iou(x, y) <= 1.0));
  }
}

TEST_CASE("binarize_attention") {
  guidance::AttentionMap uniform(3, 3, 1.0 / 9.0);
  CHECK(binarize_attention(uniform, BinarizeMode::topk, 9) == LesionMask(3, 3, std::uint8_t{1}));

  guidance::AttentionMap onehot(3, 3, 0.0);
  onehot(1, 2) = 1.0;
  CHECK(binarize_attention(onehot, BinarizeMode::topk, 1) == mask_from(3, 3, {5}));

  // full-sort oracle on a 4x4 map with distinct values
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    guidance::AttentionMap a(4, 4);
    std::vector<int> order(16);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int i = 0; i < 16; ++i) a.values[static_cast<std::size_t>(order[i])] = (i + 1) / 136.0;
    std::vector<int> idx(16);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int l, int r) { return a.values[l] > a.values[r]; });
    LesionMask expected(4, 4, std::uint8_t{0});
    for (int i = 0; i < 4; ++i) expected.values[static_cast<std::size_t>(idx[i])] = 1;
    CHECK(binarize_attention(a, BinarizeMode::topk, 4) == expected);
  }

  guidance::AttentionMap bimodal(2, 4, std::vector<double>{0.01, 0.02, 0.01, 0.3, 0.32, 0.01, 0.02, 0.31});
  CHECK(binarize_attention(bimodal, BinarizeMode::otsu) == mask_from(2, 4, {3, 4, 7}));

  CHECK(parse_binarize_mode("topk") == BinarizeMode::topk);
  CHECK_THROWS_AS(parse_binarize_mode("mean"), Error);
}

TEST_CASE("alignment_stats") {
  SUBCASE("attention equal to the normalized mask indicator gives IoU 1") {
    std::vector<AlignmentInput> in;
    for (int i = 0; i < 4; ++i) {
      auto m = mask_from(4, 4, {i, i + 1, i + 4, i + 5});
      guidance::AttentionMap a(4, 4, 0.0);
      for (std::size_t k = 0; k < 16; ++k) a.values[k] = m.values[k] / 4.0;
      in.push_back({"s" + std::to_string(i), i % 2 ? Group::male : Group::female, i / 2, a, m});
    }
    const auto s = alignment_stats(in);
    CHECK(s.median == 1.0);
    CHECK(s.sd == 0.0);
    CHECK(s.strata.size() == 4);
  }
  SUBCASE("uniform attention matches direct enumeration") {
    std::mt19937_64 rng(21);
    std::vector<AlignmentInput> in;
    std::vector<double> expected;
    for (int i = 0; i < 30; ++i) {
      LesionMask m(5, 5, std::uint8_t{0});
      for (auto& v : m.values) v = rng() % 3 == 0;
      m.values[12] = 1;
      const auto k = count_nonzero(m);
      // ties go to the lower flat index: the predicted mask is the first k pixels
      double inter = 0;
      for (std::size_t p = 0; p < k; ++p) inter += m.values[p];
      expected.push_back(inter / (2.0 * static_cast<double>(k) - inter));
      in.push_back({"u" + std::to_string(100 + i), Group::male, 0, guidance::AttentionMap(5, 5, 1.0 / 25), m});
    }
    const auto s = alignment_stats(in);
    for (std::size_t i = 0; i < in.size(); ++i) CHECK(s.records[i].iou == doctest::Approx(expected[i]).epsilon(1e-15));
    CHECK(s.median == median(expected));
  }
  SUBCASE("disjoint strata and recomputation from stored values") {
    std::vector<AlignmentRecord> recs{{"b", Group::female, 1, 0.5}, {"a", Group::male, 0, 0.25}, {"c", Group::male, 0, 0.75}};
    const auto s = aggregate_alignment(recs);
    CHECK(s.records.front().source_id == "a");
    CHECK(s.strata.size() == 2);
    CHECK(s.median == 0.5);
    CHECK(s.sd == doctest::Approx(0.25));
    const auto back = alignment_from_json(to_json(s));
    const auto recomputed = aggregate_alignment(back.records);
    CHECK(recomputed.median == s.median);
    CHECK(recomputed.sd == s.sd);
    CHECK(back.median == s.median);
  }
  CHECK(median({3.0, 1.0, 2.0, 10.0}) == 2.5);
  CHECK(sample_sd({2.0}) == 0.0);
  CHECK_THROWS_AS(aggregate_alignment({}), Error);
}

TEST_CASE("render_overlay") {
  const auto dir = fs::temp_directory_path() / "lesionattn_overlay";
  fs::create_directories(dir);
  Image img(3, 8, 8, 0.5f);

  render_overlay(img, guidance::AttentionMap(8, 8, 1.0 / 64), dir / "u.png");
  const cv::Mat u = cv::imread((dir / "u.png").string(), cv::IMREAD_COLOR);
  REQUIRE(u.rows == 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) CHECK(u.at<cv::Vec3b>(y, x) == u.at<cv::Vec3b>(0, 0));

  guidance::AttentionMap one(8, 8, 0.0);
  one(4, 4) = 1.0;
  render_overlay(img, one, dir / "o.png");
  const cv::Mat o = cv::imread((dir / "o.png").string(), cv::IMREAD_COLOR);
  CHECK(o.at<cv::Vec3b>(4, 4) != o.at<cv::Vec3b>(0, 0));
  CHECK(o.at<cv::Vec3b>(0, 0) == o.at<cv::Vec3b>(7, 7));

  render_overlay(img, one, dir / "o2.png");
  CHECK(file_bytes(dir / "o.png") == file_bytes(dir / "o2.png"));
  CHECK_THROWS_AS(render_overlay(img, one, dir / "no_such_dir" / "x.png"), Error);
  fs::remove_all(dir);
}

TEST_CASE("ROC and PR curves") {
  const auto perfect = roc_curve({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
  CHECK(std::any_of(perfect.begin(), perfect.end(), [](auto& p) { return p.x == 0.0 && p.y == 1.0; }));
  CHECK(perfect.front().x == 0.0);
  CHECK(perfect.back().x == 1.0);
  CHECK(perfect.back().y == 1.0);

  const std::vector<double> s{0.9, 0.9, 0.5, 0.3, 0.3};
  const std::vector<int> y{1, 0, 1, 0, 1};
  CHECK(roc_curve(s, y).size() == 3 + 2);
  CHECK(pr_curve(s, y).size() == 3 + 2);
  CHECK_THROWS_AS(roc_curve({0.2, 0.4}, {1, 1}), Error);

  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> rs;
  std::vector<int> ry;
  for (int i = 0; i < 4000; ++i) {
    rs.push_back(unit(rng));
    ry.push_back(static_cast<int>(rng() % 2));
  }
  CHECK(std::abs(fairmetrics::auroc(rs, ry) - 0.5) < 0.05);
  const auto roc = roc_curve(rs, ry);
  double max_gap = 0.0;
  for (const auto& p : roc) max_gap = std::max(max_gap, std::abs(p.x - p.y));
  CHECK(max_gap < 0.1);

  const auto dir = fs::temp_directory_path() / "lesionattn_curves";
  fs::create_directories(dir);
  const auto files = plot_curves(s, y, dir / "run");
  CHECK(fs::exists(files.roc_png));
  CHECK(fs::exists(files.pr_png));
  const auto table = csv::read(files.roc_csv);
  CHECK(table.rows.size() == 5);
  CHECK_THROWS_AS(plot_curves({0.1, 0.2}, {0, 0}, dir / "bad"), Error);
  fs::remove_all(dir);
}

TEST_CASE("compare_intervals states the overlap rule") {
  fairmetrics::MeanInterval a{0.2, {0.15, 0.25}};
  fairmetrics::MeanInterval b{0.1, {0.05, 0.12}};
  CHECK(compare_intervals("eo", "baseline", a, "lesion_attn", b).find("do not overlap") != std::string::npos);
  fairmetrics::MeanInterval c{0.18, {0.1, 0.26}};
  CHECK(compare_intervals("eo", "baseline", a, "x", c).find("not significant") != std::string::npos);
}
