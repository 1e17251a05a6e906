#pragma once

// Model-driven attention audit: alignment statistics over a masked dataset
// and the four-case (group x label) overlay panel.

#include <filesystem>
#include <string>
#include <vector>

#include "lesionattn/analysis.hpp"
#include "lesionattn/data_pipeline.hpp"
#include "lesionattn/harness.hpp"

namespace lesionattn::audit {

/// Requires every sample to carry a mask (error names the first one that
/// does not). Attention is taken from the model's forward pass.
analysis::AlignmentStats alignment_stats(model::Rann& model, harness::Method method, const data::Dataset& dataset,
                                         analysis::BinarizeMode mode = analysis::BinarizeMode::topk);

/// Seeded pick of one sample per (group, label) cell in the order male
/// negative, female negative, male positive, female positive. Cells with
/// no members are skipped.
std::vector<std::string> sample_figure_cases(const data::Dataset& dataset, std::uint64_t seed);

/// Renders <out_dir>/<source_id>_overlay.png for each requested id and
/// returns the written paths.
std::vector<std::filesystem::path> render_cases(model::Rann& model, harness::Method method,
                                                const data::Dataset& dataset, const std::vector<std::string>& ids,
                                                const std::filesystem::path& out_dir);

}  // namespace lesionattn::audit
