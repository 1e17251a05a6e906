#include "lesionattn/audit.hpp"

#include <map>
#include <random>

namespace lesionattn::audit {

analysis::AlignmentStats alignment_stats(model::Rann& model, harness::Method method, const data::Dataset& dataset,
                                         analysis::BinarizeMode mode) {
  if (dataset.empty()) throw Error("alignment audit needs at least one sample");
  for (const auto& item : dataset) {
    if (!item.mask) throw Error("sample '" + item.source_id + "' has no lesion mask");
  }
  const auto preds = harness::predict(model, method, dataset, true);
  std::vector<analysis::AlignmentInput> inputs;
  inputs.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    inputs.push_back({dataset[i].source_id, dataset[i].group, dataset[i].label, preds.attention[i], *dataset[i].mask});
  }
  return analysis::alignment_stats(inputs, mode);
}

std::vector<std::string> sample_figure_cases(const data::Dataset& dataset, std::uint64_t seed) {
  std::map<std::pair<int, Group>, std::vector<std::string>> cells;
  for (const auto& item : dataset) cells[{item.label, item.group}].push_back(item.source_id);
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  for (const auto& key : {std::pair{0, Group::male}, std::pair{0, Group::female}, std::pair{1, Group::male},
                          std::pair{1, Group::female}}) {
    auto it = cells.find(key);
    if (it == cells.end()) continue;
    auto ids = it->second;
    std::sort(ids.begin(), ids.end());
    std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
    out.push_back(ids[pick(rng)]);
  }
  return out;
}

std::vector<std::filesystem::path> render_cases(model::Rann& model, harness::Method method,
                                                const data::Dataset& dataset, const std::vector<std::string>& ids,
                                                const std::filesystem::path& out_dir) {
  std::map<std::string, const data::LabeledImage*> by_id;
  for (const auto& item : dataset) by_id[item.source_id] = &item;
  data::Dataset chosen;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error("unknown sample id '" + id + "'");
    chosen.push_back(*it->second);
  }
  std::filesystem::create_directories(out_dir);
  const auto preds = harness::predict(model, method, chosen, true);
  std::vector<std::filesystem::path> written;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    auto path = out_dir / (chosen[i].source_id + "_overlay.png");
    analysis::render_overlay(chosen[i].image, preds.attention[i], path);
    written.push_back(std::move(path));
  }
  return written;
}

}  // namespace lesionattn::audit
