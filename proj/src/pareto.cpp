#include "lesionattn/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "lesionattn/csv.hpp"

namespace lesionattn::pareto {

void ModelCandidate::validate() const {
  auto ok = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  if (!ok(p_pred)) throw Error("candidate '" + id + "': p_pred outside [0,1]");
  if (!ok(p_fair)) throw Error("candidate '" + id + "': p_fair outside [0,1]");
}

bool dominates(const ModelCandidate& a, const ModelCandidate& b) {
  return a.p_pred >= b.p_pred && a.p_fair >= b.p_fair && (a.p_pred > b.p_pred || a.p_fair > b.p_fair);
}

namespace {

bool frontier_order(const ModelCandidate& a, const ModelCandidate& b) {
  if (a.p_pred != b.p_pred) return a.p_pred > b.p_pred;
  if (a.p_fair != b.p_fair) return a.p_fair > b.p_fair;
  return a.id < b.id;
}

}  // namespace

ParetoSet pareto_frontier(const std::vector<ModelCandidate>& candidates) {
  if (candidates.empty()) throw Error("pareto frontier needs at least one candidate");
  for (const auto& c : candidates) c.validate();

  std::vector<ModelCandidate> sorted = candidates;
  std::sort(sorted.begin(), sorted.end(), frontier_order);

  // Sweep blocks of equal p_pred in descending order. Inside a block only
  // the top p_fair can survive, and it survives iff it beats every p_fair
  // seen at strictly higher p_pred.
  ParetoSet out;
  double best_fair = -1.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].p_pred == sorted[i].p_pred) ++j;
    const double block_fair = sorted[i].p_fair;
    if (block_fair > best_fair) {
      for (std::size_t k = i; k < j && sorted[k].p_fair == block_fair; ++k) out.members.push_back(sorted[k]);
      best_fair = block_fair;
    }
    i = j;
  }
  return out;
}

Policy parse_policy(std::string_view name) {
  if (name == "knee") return Policy::knee;
  if (name == "max_pred") return Policy::max_pred;
  if (name == "max_fair") return Policy::max_fair;
  throw Error("unknown selection policy '" + std::string(name) + "' (expected knee, max_pred or max_fair)");
}

std::string_view to_string(Policy policy) {
  switch (policy) {
    case Policy::knee: return "knee";
    case Policy::max_pred: return "max_pred";
    case Policy::max_fair: return "max_fair";
  }
  return "unknown";
}

ModelCandidate select_final(const ParetoSet& frontier, Policy policy) {
  if (frontier.members.empty()) throw Error("cannot select from an empty frontier");
  // better(a, b): a is preferred over b.
  auto better = [policy](const ModelCandidate& a, const ModelCandidate& b) {
    double ka = 0.0, kb = 0.0, ta = 0.0, tb = 0.0;
    switch (policy) {
      case Policy::knee:
        ka = a.p_pred + a.p_fair, kb = b.p_pred + b.p_fair, ta = a.p_fair, tb = b.p_fair;
        break;
      case Policy::max_pred:
        ka = a.p_pred, kb = b.p_pred, ta = a.p_fair, tb = b.p_fair;
        break;
      case Policy::max_fair:
        ka = a.p_fair, kb = b.p_fair, ta = a.p_pred, tb = b.p_pred;
        break;
    }
    if (ka != kb) return ka > kb;
    if (ta != tb) return ta > tb;
    return a.id < b.id;
  };
  return *std::min_element(frontier.members.begin(), frontier.members.end(),
                           [&](const ModelCandidate& a, const ModelCandidate& b) { return better(a, b); });
}

std::vector<ModelCandidate> read_candidates_csv(const std::filesystem::path& path) {
  const csv::Table table = csv::read(path);
  for (const char* col : {"id", "p_pred", "p_fair"}) {
    if (!table.has_column(col)) throw Error(path.string() + ": missing column '" + col + "'");
  }
  std::vector<ModelCandidate> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    ModelCandidate c;
    c.id = table.get(r, "id");
    try {
      c.p_pred = std::stod(table.get(r, "p_pred"));
      c.p_fair = std::stod(table.get(r, "p_fair"));
    } catch (const std::exception&) {
      throw Error(path.string() + ": non-numeric objective on row " + std::to_string(r + 2));
    }
    for (const auto& col : table.header) {
      if (col == "id" || col == "p_pred" || col == "p_fair" || col == "on_frontier") continue;
      c.hyperparams[col] = table.get(r, col);
    }
    c.validate();
    out.push_back(std::move(c));
  }
  return out;
}

void write_candidates_csv(const std::filesystem::path& path, const std::vector<ModelCandidate>& candidates,
                          const ParetoSet& frontier) {
  std::set<std::string> keys;
  for (const auto& c : candidates) {
    for (const auto& [k, v] : c.hyperparams) keys.insert(k);
  }
  std::set<std::string> on;
  for (const auto& m : frontier.members) on.insert(m.id);

  csv::Table table;
  table.header = {"id", "p_pred", "p_fair"};
  table.header.insert(table.header.end(), keys.begin(), keys.end());
  table.header.push_back("on_frontier");
  for (const auto& c : candidates) {
    std::vector<std::string> row{c.id, csv::format_double(c.p_pred), csv::format_double(c.p_fair)};
    for (const auto& k : keys) {
      auto it = c.hyperparams.find(k);
      row.push_back(it == c.hyperparams.end() ? "" : it->second);
    }
    row.push_back(on.count(c.id) ? "1" : "0");
    table.rows.push_back(std::move(row));
  }
  csv::write(path, table);
}

}  // namespace lesionattn::pareto
