#pragma once

// Labeled dermoscopy-style images: a synthetic generator with a plantable
// group-correlated background shortcut, HAM/BCN-style metadata ingestion,
// stratified splitting and per-group summaries.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lesionattn/types.hpp"

namespace lesionattn::data {

struct LabeledImage {
  Image image;
  int label = 0;  // 1 = malignant
  Group group = Group::male;
  std::optional<LesionMask> mask;
  std::string source_id;
  std::optional<double> age;
};

using Dataset = std::vector<LabeledImage>;

struct SyntheticSpec {
  int n_samples = 1000;
  int resolution = 64;
  /// Scale of the label-dependent blue-white tint placed in the lesion
  /// and its boundary ring.
  double lesion_signal_strength = 1.0;
  /// Probability that an image's background carries its group's stripe
  /// texture.
  double shortcut_strength = 0.8;
  /// Fraction of the label signal moved from the lesion interior into the
  /// ring just outside the mask.
  double context_dependence = 0.5;
  /// P(malignant | male) - P(malignant | female); base rates are
  /// 0.5 +- correlation / 2.
  double group_label_correlation = 0.4;
  /// Peak amplitude of the background stripe texture.
  double shortcut_amplitude = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Deterministic in `spec` (including seed); output sorted by source_id.
/// Drawing order never depends on the strength parameters, so a twin with
/// lesion_signal_strength = 0 differs only inside mask plus ring.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Pixels outside `mask` within `width` pixels of it (elliptical
/// dilation).
LesionMask boundary_ring(const LesionMask& mask, int width);

/// Ring width used by the generator at a given resolution.
int ring_width_for(int resolution);

/// Mean over pixels where `region` is set of (horizontal-stripe energy -
/// vertical-stripe energy), measured from the green channel. Positive for
/// the male background texture, negative for the female one. Used as the
/// planted-shortcut probe.
double stripe_orientation_statistic(const Image& image, const LesionMask& region);

struct IngestOptions {
  std::set<std::string> malignant_diagnoses = {"BCC", "MEL", "AKIEC"};
  int resolution = 64;
  std::string mask_provenance;
};

std::set<std::string> ham_malignant_set();
std::set<std::string> bcn_malignant_set();

struct IngestResult {
  Dataset images;
  std::size_t dropped_missing_sex = 0;
  std::string mask_provenance;
};

/// Reads a metadata CSV (image_id, diagnosis [alias dx], sex, age) and the
/// matching RGB files (`<id>.png|.jpg|.jpeg`). Masks, when a directory is
/// given, are `<id>.png` or `<id>_segmentation.png`. Images and masks are
/// resized to `options.resolution`.
IngestResult load_real_dataset(const std::filesystem::path& metadata_path, const std::filesystem::path& images_dir,
                               const std::optional<std::filesystem::path>& masks_dir,
                               const IngestOptions& options = {});

/// Persists a dataset as images/<id>.png, masks/<id>.png and metadata.csv,
/// the same layout load_real_dataset reads. Positive samples are written
/// with diagnosis MEL and negatives with NV.
void write_dataset_dir(const std::filesystem::path& dir, const Dataset& data);

struct DatasetSplit {
  Dataset train;
  Dataset validation;
  Dataset test;
};

struct SplitIds {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

struct SplitRatios {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
};

/// Random split stratified jointly on (label, group). Strata with fewer
/// than 3 members are pooled and split without stratification (with a
/// warning). Overall sizes hit round(ratio * n) for train and validation.
SplitIds split_ids(const Dataset& data, const SplitRatios& ratios, std::uint64_t seed);
DatasetSplit split_dataset(const Dataset& data, const SplitRatios& ratios, std::uint64_t seed);
DatasetSplit apply_split(const Dataset& data, const SplitIds& ids);

void write_split(const std::filesystem::path& path, const SplitIds& ids);
SplitIds read_split(const std::filesystem::path& path);

struct SummaryRow {
  std::string name;  // "male", "female" or "total"
  std::optional<double> mean_age;
  std::optional<double> positive_rate;
  std::size_t count = 0;
};

/// Rows male, female, total. A group with no samples keeps its row with
/// count 0 and empty rate/age.
std::vector<SummaryRow> dataset_summary(const Dataset& data);

/// Returns a copy with every mask removed.
Dataset strip_masks(Dataset data);

}  // namespace lesionattn::data
