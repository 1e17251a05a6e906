#include "lesionattn/data_pipeline.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include "json.hpp"
#include "lesionattn/attention_guidance.hpp"
#include "lesionattn/csv.hpp"

namespace lesionattn::data {

namespace {

constexpr int kMaxLesionRetries = 64;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over (seed, index)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Gaussian-blurred white noise rescaled to unit standard deviation.
cv::Mat band_limited_noise(std::mt19937_64& rng, int size, double sigma) {
  std::normal_distribution<float> normal(0.0f, 1.0f);
  cv::Mat white(size, size, CV_32F);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) white.at<float>(r, c) = normal(rng);
  }
  cv::Mat smooth;
  cv::GaussianBlur(white, smooth, cv::Size(0, 0), sigma, sigma, cv::BORDER_REFLECT);
  cv::Scalar mean, sd;
  cv::meanStdDev(smooth, mean, sd);
  smooth = (smooth - mean[0]) / std::max(sd[0], 1e-9);
  return smooth;
}

struct LesionGeometry {
  double cy, cx, semi_a, semi_b, angle;
};

LesionMask rasterize(const LesionGeometry& g, int res) {
  LesionMask mask(res, res);
  const double ca = std::cos(g.angle), sa = std::sin(g.angle);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const double dy = y + 0.5 - g.cy, dx = x + 0.5 - g.cx;
      const double u = (dx * ca + dy * sa) / g.semi_a;
      const double v = (-dx * sa + dy * ca) / g.semi_b;
      mask(y, x) = (u * u + v * v <= 1.0) ? 1 : 0;
    }
  }
  return mask;
}

bool fits(const LesionGeometry& g, int res, int margin) {
  const double reach = std::max(g.semi_a, g.semi_b) + margin;
  return g.cy - reach >= 0 && g.cx - reach >= 0 && g.cy + reach <= res && g.cx + reach <= res;
}

LabeledImage synthesize_one(const SyntheticSpec& spec, std::size_t index) {
  const int res = spec.resolution;
  const double scale = res / 64.0;
  std::mt19937_64 rng(mix_seed(spec.seed, index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  LabeledImage out;
  out.source_id = fmt::format("syn_{:06d}", index);
  out.group = unit(rng) < 0.5 ? Group::male : Group::female;
  const double sign = out.group == Group::male ? 1.0 : -1.0;
  const double base_rate = std::clamp(0.5 + sign * spec.group_label_correlation / 2.0, 0.0, 1.0);
  out.label = unit(rng) < base_rate ? 1 : 0;

  const int ring = ring_width_for(res);
  LesionGeometry geom{};
  int attempt = 0;
  for (;; ++attempt) {
    if (attempt == kMaxLesionRetries) {
      throw Error(fmt::format("synthetic sample {}: lesion does not fit a {}px image after {} attempts", index, res,
                              kMaxLesionRetries));
    }
    geom.cy = (0.3 + 0.4 * unit(rng)) * res;
    geom.cx = (0.3 + 0.4 * unit(rng)) * res;
    geom.semi_a = (0.12 + 0.1 * unit(rng)) * res;
    geom.semi_b = (0.12 + 0.1 * unit(rng)) * res;
    geom.angle = std::numbers::pi * unit(rng);
    if (fits(geom, res, ring)) break;
  }
  const LesionMask mask = rasterize(geom, res);
  const LesionMask ring_mask = boundary_ring(mask, ring);

  const cv::Mat skin_noise = band_limited_noise(rng, res, 2.0 * scale);
  const double tone = 0.65 + 0.2 * unit(rng);
  const bool planted = unit(rng) < spec.shortcut_strength;
  const double stripe_phase = 2.0 * std::numbers::pi * unit(rng);
  const double stripe_period = (5.0 + 2.0 * unit(rng)) * scale;
  const double lesion_shade = 0.8 + 0.3 * unit(rng);
  const double interior_signal = spec.lesion_signal_strength * (out.label + 0.9 * normal(rng));
  const double ring_signal = spec.lesion_signal_strength * (out.label + 0.9 * normal(rng));

  constexpr std::array<double, 3> skin_tint{0.08, -0.05, -0.12};
  constexpr std::array<double, 3> lesion_color{0.45, 0.30, 0.22};
  // Blue-white tint: red down, blue up.
  constexpr std::array<double, 3> veil{-0.04, 0.0, 0.08};
  const double cd = spec.context_dependence;

  out.image = Image(3, res, res);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const bool in_lesion = mask(y, x) != 0;
      const bool in_ring = ring_mask(y, x) != 0;
      const double noise = skin_noise.at<float>(y, x);
      double stripe = 0.0;
      if (planted && !in_lesion) {
        const double coord = out.group == Group::male ? y : x;
        stripe = spec.shortcut_amplitude * std::sin(2.0 * std::numbers::pi * coord / stripe_period + stripe_phase);
      }
      for (int c = 0; c < 3; ++c) {
        double v;
        if (in_lesion) {
          v = lesion_color[c] * lesion_shade + 0.02 * noise + veil[c] * 2.0 * (1.0 - cd) * interior_signal;
        } else {
          v = tone + skin_tint[c] + 0.03 * noise + stripe;
          if (in_ring) v += veil[c] * 2.0 * cd * ring_signal;
        }
        out.image.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  out.mask = mask;
  return out;
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

Image load_rgb(const std::filesystem::path& path, int resolution) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error("cannot decode image " + path.string());
  if (bgr.rows != resolution || bgr.cols != resolution) {
    cv::Mat resized;
    cv::resize(bgr, resized, cv::Size(resolution, resolution), 0, 0, cv::INTER_AREA);
    bgr = resized;
  }
  Image img(3, bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    for (int x = 0; x < bgr.cols; ++x) {
      const auto& px = bgr.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(px[2 - c]) / 255.0f;
    }
  }
  return img;
}

std::optional<std::filesystem::path> first_existing(const std::filesystem::path& dir, const std::string& stem,
                                                    std::initializer_list<const char*> suffixes) {
  for (const char* s : suffixes) {
    auto p = dir / (stem + s);
    if (std::filesystem::exists(p)) return p;
  }
  return std::nullopt;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_samples < 1) throw Error("n_samples must be >= 1");
  if (resolution < 16) throw Error("resolution must be >= 16");
  if (!(lesion_signal_strength >= 0.0)) throw Error("lesion_signal_strength must be >= 0");
  if (!(shortcut_strength >= 0.0 && shortcut_strength <= 1.0)) throw Error("shortcut_strength must lie in [0,1]");
  if (!(context_dependence >= 0.0 && context_dependence <= 1.0)) throw Error("context_dependence must lie in [0,1]");
  if (!(group_label_correlation >= -1.0 && group_label_correlation <= 1.0)) {
    throw Error("group_label_correlation must lie in [-1,1]");
  }
  if (!(shortcut_amplitude >= 0.0)) throw Error("shortcut_amplitude must be >= 0");
}

int ring_width_for(int resolution) { return std::max(1, resolution * 3 / 32); }

LesionMask boundary_ring(const LesionMask& mask, int width) {
  cv::Mat src(mask.rows, mask.cols, CV_8U);
  for (int r = 0; r < mask.rows; ++r) {
    for (int c = 0; c < mask.cols; ++c) src.at<std::uint8_t>(r, c) = mask(r, c) ? 1 : 0;
  }
  cv::Mat grown;
  const cv::Mat kernel = cv::getStructuringElement(cv::MORPH_ELLIPSE, cv::Size(2 * width + 1, 2 * width + 1));
  cv::dilate(src, grown, kernel);
  LesionMask ring(mask.rows, mask.cols);
  for (int r = 0; r < mask.rows; ++r) {
    for (int c = 0; c < mask.cols; ++c) ring(r, c) = (grown.at<std::uint8_t>(r, c) && !mask(r, c)) ? 1 : 0;
  }
  return ring;
}

double stripe_orientation_statistic(const Image& image, const LesionMask& region) {
  if (region.rows != image.height || region.cols != image.width) throw Error("region/image shape mismatch");
  double horizontal = 0.0, vertical = 0.0;
  std::size_t n = 0;
  for (int y = 1; y + 1 < image.height; ++y) {
    for (int x = 1; x + 1 < image.width; ++x) {
      if (!region(y, x) || !region(y - 1, x) || !region(y + 1, x) || !region(y, x - 1) || !region(y, x + 1)) continue;
      // Horizontal stripes vary along y.
      const double dy = image.at(1, y + 1, x) - image.at(1, y - 1, x);
      const double dx = image.at(1, y, x + 1) - image.at(1, y, x - 1);
      horizontal += dy * dy;
      vertical += dx * dx;
      ++n;
    }
  }
  if (n == 0) return 0.0;
  return (horizontal - vertical) / static_cast<double>(n);
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Dataset out;
  out.reserve(static_cast<std::size_t>(spec.n_samples));
  for (int i = 0; i < spec.n_samples; ++i) out.push_back(synthesize_one(spec, static_cast<std::size_t>(i)));
  return out;
}

std::set<std::string> ham_malignant_set() { return {"BCC", "MEL", "AKIEC"}; }
std::set<std::string> bcn_malignant_set() { return {"BCC", "MEL", "AK", "SCC"}; }

IngestResult load_real_dataset(const std::filesystem::path& metadata_path, const std::filesystem::path& images_dir,
                               const std::optional<std::filesystem::path>& masks_dir, const IngestOptions& options) {
  const csv::Table table = csv::read(metadata_path);
  const std::string diagnosis_col = table.has_column("diagnosis") ? "diagnosis" : "dx";
  std::vector<std::string> missing;
  for (const std::string& col : {std::string("image_id"), diagnosis_col, std::string("sex"), std::string("age")}) {
    if (!table.has_column(col)) missing.push_back(col == "dx" ? "diagnosis" : col);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error(metadata_path.string() + ": missing columns: " + list);
  }
  if (table.rows.empty()) throw Error(metadata_path.string() + ": metadata has no rows");

  std::set<std::string> malignant;
  for (const auto& d : options.malignant_diagnoses) malignant.insert(upper(d));

  IngestResult result;
  result.mask_provenance = options.mask_provenance.empty() && masks_dir ? masks_dir->string() : options.mask_provenance;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string id = trim(table.get(r, "image_id"));
    const std::string sex = trim(table.get(r, "sex"));
    Group group;
    try {
      group = parse_group(sex);
    } catch (const Error&) {
      ++result.dropped_missing_sex;
      continue;
    }
    LabeledImage item;
    item.source_id = id;
    item.group = group;
    item.label = malignant.count(upper(trim(table.get(r, diagnosis_col)))) ? 1 : 0;
    const std::string age = trim(table.get(r, "age"));
    if (!age.empty()) {
      try {
        item.age = std::stod(age);
      } catch (const std::exception&) {
        throw Error(metadata_path.string() + ": non-numeric age for '" + id + "'");
      }
    }
    const auto image_path = first_existing(images_dir, id, {".png", ".jpg", ".jpeg"});
    if (!image_path) throw Error("image file for id '" + id + "' not found in " + images_dir.string());
    item.image = load_rgb(*image_path, options.resolution);
    if (masks_dir) {
      const auto mask_path = first_existing(*masks_dir, id, {".png", "_segmentation.png"});
      if (!mask_path) throw Error("mask file for id '" + id + "' not found in " + masks_dir->string());
      item.mask = guidance::resize_mask(guidance::load_mask(*mask_path), options.resolution, options.resolution);
    }
    result.images.push_back(std::move(item));
  }
  if (result.dropped_missing_sex > 0) {
    spdlog::info("{}: dropped {} row(s) with missing or unrecognized sex", metadata_path.string(),
                 result.dropped_missing_sex);
  }
  std::sort(result.images.begin(), result.images.end(),
            [](const LabeledImage& a, const LabeledImage& b) { return a.source_id < b.source_id; });
  return result;
}

void write_dataset_dir(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  csv::Table meta;
  meta.header = {"image_id", "diagnosis", "sex", "age"};
  for (const auto& item : data) {
    cv::Mat bgr(item.image.height, item.image.width, CV_8UC3);
    for (int y = 0; y < item.image.height; ++y) {
      for (int x = 0; x < item.image.width; ++x) {
        auto& px = bgr.at<cv::Vec3b>(y, x);
        for (int c = 0; c < 3; ++c) {
          px[2 - c] = static_cast<std::uint8_t>(std::lround(std::clamp(item.image.at(c, y, x), 0.0f, 1.0f) * 255.0f));
        }
      }
    }
    const auto image_path = dir / "images" / (item.source_id + ".png");
    if (!cv::imwrite(image_path.string(), bgr)) throw Error("cannot write " + image_path.string());
    if (item.mask) guidance::save_mask(*item.mask, dir / "masks" / (item.source_id + ".png"));
    meta.rows.push_back({item.source_id, item.label ? "MEL" : "NV", std::string(to_string(item.group)),
                         item.age ? csv::format_double(*item.age) : ""});
  }
  csv::write(dir / "metadata.csv", meta);
}

SplitIds split_ids(const Dataset& data, const SplitRatios& ratios, std::uint64_t seed) {
  const std::size_t n = data.size();
  if (n < 5) throw Error("split needs at least 5 samples, got " + std::to_string(n));
  const double total = ratios.train + ratios.validation + ratios.test;
  if (!(ratios.train > 0 && ratios.validation > 0 && ratios.test > 0) || std::abs(total - 1.0) > 1e-9) {
    throw Error("split ratios must be positive and sum to 1");
  }
  {
    std::set<std::string> ids;
    for (const auto& item : data) {
      if (!ids.insert(item.source_id).second) throw Error("duplicate source_id '" + item.source_id + "'");
    }
  }

  // Strata keyed by (label, group); members sorted by id so the result
  // does not depend on input order.
  std::map<std::pair<int, int>, std::vector<std::string>> strata;
  for (const auto& item : data) strata[{item.label, static_cast<int>(index_of(item.group))}].push_back(item.source_id);
  std::vector<std::vector<std::string>> pools;
  std::vector<std::string> small;
  for (auto& [key, ids] : strata) {
    if (ids.size() < 3) {
      spdlog::warn("stratum (label={}, group={}) has {} member(s); splitting it without stratification", key.first,
                   to_string(static_cast<Group>(key.second)), ids.size());
      small.insert(small.end(), ids.begin(), ids.end());
    } else {
      pools.push_back(ids);
    }
  }
  if (!small.empty()) pools.push_back(small);

  std::mt19937_64 rng(seed);
  const std::array<double, 3> r{ratios.train, ratios.validation, ratios.test};
  std::array<std::size_t, 3> target{static_cast<std::size_t>(std::llround(r[0] * static_cast<double>(n))),
                                    static_cast<std::size_t>(std::llround(r[1] * static_cast<double>(n))), 0};
  target[1] = std::min(target[1], n - target[0]);
  target[2] = n - target[0] - target[1];

  std::array<std::vector<std::string>, 3> parts;
  std::vector<std::string> leftovers;
  for (auto& pool : pools) {
    std::sort(pool.begin(), pool.end());
    std::shuffle(pool.begin(), pool.end(), rng);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const auto take = static_cast<std::size_t>(std::floor(r[s] * static_cast<double>(pool.size())));
      parts[s].insert(parts[s].end(), pool.begin() + static_cast<std::ptrdiff_t>(pos),
                      pool.begin() + static_cast<std::ptrdiff_t>(pos + take));
      pos += take;
    }
    leftovers.insert(leftovers.end(), pool.begin() + static_cast<std::ptrdiff_t>(pos), pool.end());
  }
  // Floors leave a few items per stratum; hand them to whichever split is
  // furthest below its overall target.
  for (auto& id : leftovers) {
    std::size_t best = 0;
    std::ptrdiff_t best_deficit = std::numeric_limits<std::ptrdiff_t>::min();
    for (std::size_t s = 0; s < 3; ++s) {
      const auto deficit = static_cast<std::ptrdiff_t>(target[s]) - static_cast<std::ptrdiff_t>(parts[s].size());
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = s;
      }
    }
    parts[best].push_back(std::move(id));
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

DatasetSplit apply_split(const Dataset& data, const SplitIds& ids) {
  std::map<std::string, const LabeledImage*> by_id;
  for (const auto& item : data) by_id[item.source_id] = &item;
  auto collect = [&](const std::vector<std::string>& list) {
    Dataset out;
    out.reserve(list.size());
    for (const auto& id : list) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw Error("split references unknown id '" + id + "'");
      out.push_back(*it->second);
    }
    return out;
  };
  return {collect(ids.train), collect(ids.validation), collect(ids.test)};
}

DatasetSplit split_dataset(const Dataset& data, const SplitRatios& ratios, std::uint64_t seed) {
  return apply_split(data, split_ids(data, ratios, seed));
}

void write_split(const std::filesystem::path& path, const SplitIds& ids) {
  nlohmann::json j{{"train", ids.train}, {"validation", ids.validation}, {"test", ids.test}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

SplitIds read_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open split file " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    return {j.at("train").get<std::vector<std::string>>(), j.at("validation").get<std::vector<std::string>>(),
            j.at("test").get<std::vector<std::string>>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": malformed split file: " + e.what());
  }
}

std::vector<SummaryRow> dataset_summary(const Dataset& data) {
  if (data.empty()) throw Error("dataset summary needs at least one sample");
  struct Acc {
    std::size_t count = 0, positives = 0, aged = 0;
    double age_sum = 0.0;
  };
  std::array<Acc, 3> acc;  // male, female, total
  for (const auto& item : data) {
    for (std::size_t slot : {index_of(item.group), std::size_t{2}}) {
      auto& a = acc[slot];
      ++a.count;
      a.positives += item.label == 1 ? 1 : 0;
      if (item.age) {
        ++a.aged;
        a.age_sum += *item.age;
      }
    }
  }
  std::vector<SummaryRow> rows;
  const std::array<const char*, 3> names{"male", "female", "total"};
  for (std::size_t i = 0; i < 3; ++i) {
    SummaryRow row;
    row.name = names[i];
    row.count = acc[i].count;
    if (acc[i].count > 0) row.positive_rate = static_cast<double>(acc[i].positives) / static_cast<double>(acc[i].count);
    if (acc[i].aged > 0) row.mean_age = acc[i].age_sum / static_cast<double>(acc[i].aged);
    rows.push_back(row);
  }
  return rows;
}

Dataset strip_masks(Dataset data) {
  for (auto& item : data) item.mask.reset();
  return data;
}

}  // namespace lesionattn::data
