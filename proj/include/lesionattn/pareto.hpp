#pragma once

// Bi-objective model selection over (predictive performance, fairness).

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lesionattn/types.hpp"

namespace lesionattn::pareto {

struct ModelCandidate {
  std::string id;
  std::map<std::string, std::string> hyperparams;
  double p_pred = 0.0;  // validation AUROC
  double p_fair = 0.0;  // 1 - validation EO

  void validate() const;
};

/// Members sorted by descending p_pred (then descending p_fair, then id).
struct ParetoSet {
  std::vector<ModelCandidate> members;
};

/// a >= b in both objectives with at least one strict inequality.
bool dominates(const ModelCandidate& a, const ModelCandidate& b);

/// Exactly the non-dominated candidates. Candidates sharing an identical
/// point are all kept. O(n log n).
ParetoSet pareto_frontier(const std::vector<ModelCandidate>& candidates);

enum class Policy { knee, max_pred, max_fair };

Policy parse_policy(std::string_view name);
std::string_view to_string(Policy policy);

/// knee: max p_pred + p_fair, ties to higher p_fair, then smaller id.
/// max_pred / max_fair: max of that objective, ties to the other objective,
/// then smaller id.
ModelCandidate select_final(const ParetoSet& frontier, Policy policy = Policy::knee);

/// CSV with columns id, p_pred, p_fair followed by hyperparameter columns.
/// An on_frontier column, when present on input, is ignored.
std::vector<ModelCandidate> read_candidates_csv(const std::filesystem::path& path);

/// Writes every candidate with an on_frontier flag (1 for members of
/// `frontier`, matched by id).
void write_candidates_csv(const std::filesystem::path& path, const std::vector<ModelCandidate>& candidates,
                          const ParetoSet& frontier);

}  // namespace lesionattn::pareto
