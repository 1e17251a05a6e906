#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "lesionattn/pareto.hpp"

using namespace lesionattn;
using namespace lesionattn::pareto;

namespace {

ModelCandidate cand(std::string id, double pred, double fair) { return {std::move(id), {}, pred, fair}; }

std::set<std::string> ids(const ParetoSet& s) {
  std::set<std::string> out;
  for (const auto& m : s.members) out.insert(m.id);
  return out;
}

std::set<std::string> brute_force(const std::vector<ModelCandidate>& cs) {
  std::set<std::string> out;
  for (const auto& a : cs) {
    bool dominated = false;
    for (const auto& b : cs) dominated |= dominates(b, a);
    if (!dominated) out.insert(a.id);
  }
  return out;
}

std::vector<ModelCandidate> random_set(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(1, 12);
  std::uniform_int_distribution<int> coarse(0, 8);  // many ties and duplicates
  std::vector<ModelCandidate> cs;
  const int n = size(rng);
  for (int i = 0; i < n; ++i) cs.push_back(cand("c" + std::to_string(i), coarse(rng) / 10.0, coarse(rng) / 10.0));
  return cs;
}

}  // namespace

TEST_CASE("dominates examples") {
  CHECK(dominates(cand("a", 0.9, 0.9), cand("b", 0.8, 0.8)));
  CHECK_FALSE(dominates(cand("a", 0.9, 0.9), cand("b", 0.9, 0.9)));
  CHECK_FALSE(dominates(cand("a", 0.9, 0.7), cand("b", 0.8, 0.8)));
  CHECK(dominates(cand("a", 0.9, 0.8), cand("b", 0.9, 0.7)));
}

TEST_CASE("pareto_frontier examples") {
  const auto f = pareto_frontier({cand("a", 0.9, 0.9), cand("b", 0.8, 0.95), cand("c", 0.85, 0.85)});
  REQUIRE(f.members.size() == 2);
  CHECK(f.members[0].id == "a");
  CHECK(f.members[1].id == "b");
  CHECK(ids(pareto_frontier({cand("x", 0.1, 0.2)})) == std::set<std::string>{"x"});
  CHECK(pareto_frontier({cand("x", 0.5, 0.5), cand("y", 0.5, 0.5), cand("z", 0.5, 0.5)}).members.size() == 3);
  CHECK_THROWS_AS(pareto_frontier({}), Error);
  CHECK_THROWS_AS(pareto_frontier({cand("bad", 1.2, 0.5)}), Error);
}

TEST_CASE("pareto_frontier matches brute force and its invariants") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    auto cs = random_set(rng);
    const auto f = pareto_frontier(cs);
    CHECK(ids(f) == brute_force(cs));
    for (std::size_t i = 1; i < f.members.size(); ++i) CHECK(f.members[i - 1].p_pred >= f.members[i].p_pred);

    auto shuffled = cs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(ids(pareto_frontier(shuffled)) == ids(f));

    auto transformed = cs;
    for (auto& c : transformed) {
      c.p_pred = std::sqrt(c.p_pred);
      c.p_fair = c.p_fair * c.p_fair;
    }
    CHECK(ids(pareto_frontier(transformed)) == ids(f));

    // a dominated addition changes nothing
    auto with_dominated = cs;
    const auto& worst = *std::min_element(cs.begin(), cs.end(), [](auto& a, auto& b) { return a.p_pred + a.p_fair < b.p_pred + b.p_fair; });
    if (worst.p_pred > 0.0 && worst.p_fair > 0.0) {
      with_dominated.push_back(cand("extra", worst.p_pred / 2, worst.p_fair / 2));
      CHECK(ids(pareto_frontier(with_dominated)) == ids(f));
    }

    // a new best-p_pred point evicts exactly what it dominates
    auto with_top = cs;
    const auto top = cand("top", 0.95, 0.4);
    with_top.push_back(top);
    std::set<std::string> expected{"top"};
    for (const auto& m : f.members)
      if (!dominates(top, m)) expected.insert(m.id);
    CHECK(ids(pareto_frontier(with_top)) == expected);
  }
}

TEST_CASE("select_final policies") {
  const auto f = pareto_frontier({cand("a", 0.9, 0.9), cand("b", 0.8, 0.95)});
  CHECK(select_final(f).id == "a");
  CHECK(select_final(f, Policy::max_fair).id == "b");
  CHECK(select_final(f, Policy::max_pred).id == "a");

  const auto tie = pareto_frontier({cand("p", 0.9, 0.8), cand("q", 0.8, 0.9)});
  CHECK(select_final(tie, Policy::knee).id == "q");

  const auto dup = pareto_frontier({cand("z", 0.7, 0.7), cand("y", 0.7, 0.7)});
  CHECK(select_final(dup).id == "y");

  const auto one = pareto_frontier({cand("solo", 0.6, 0.4)});
  for (auto p : {Policy::knee, Policy::max_pred, Policy::max_fair}) CHECK(select_final(one, p).id == "solo");

  CHECK(parse_policy("knee") == Policy::knee);
  CHECK(parse_policy("max_pred") == Policy::max_pred);
  CHECK_THROWS_AS(parse_policy("median"), Error);
  CHECK_THROWS_AS(select_final(ParetoSet{}), Error);
}

TEST_CASE("candidate CSV round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "lesionattn_pareto_test";
  std::filesystem::create_directories(dir);
  std::vector<ModelCandidate> cs{{"r1", {{"lr", "0.001"}, {"lambda", "0.5"}}, 0.9, 0.9},
                                 {"r2", {{"lr", "0.0001"}, {"lambda", "0.5"}}, 0.8, 0.95},
                                 {"r3", {{"lr", "1e-05"}, {"lambda", "0.5"}}, 0.85, 0.85}};
  const auto f = pareto_frontier(cs);
  write_candidates_csv(dir / "c.csv", cs, f);
  const auto back = read_candidates_csv(dir / "c.csv");
  REQUIRE(back.size() == 3);
  CHECK(back[1].hyperparams.at("lr") == "0.0001");
  CHECK(back[2].p_pred == 0.85);
  CHECK_FALSE(back[0].hyperparams.count("on_frontier"));

  std::ifstream in(dir / "c.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "id,p_pred,p_fair,lambda,lr,on_frontier");

  CHECK_THROWS_AS(read_candidates_csv(dir / "none.csv"), Error);
  std::ofstream(dir / "bad.csv") << "id,p_pred\nx,0.5\n";
  CHECK_THROWS_AS(read_candidates_csv(dir / "bad.csv"), Error);
  std::filesystem::remove_all(dir);
}
