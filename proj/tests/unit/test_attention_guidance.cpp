#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "lesionattn/attention_guidance.hpp"

using namespace lesionattn;
using namespace lesionattn::guidance;

namespace {

struct Instance {
  SoftMask target;
  AttentionMap attn;
};

Instance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> side(1, 8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int r = side(rng);
  const int c = side(rng);
  LesionMask m(r, c);
  for (auto& v : m.values) v = unit(rng) < 0.4 ? 1 : 0;
  m.values[0] = 1;
  Instance inst{soften_mask(m, unit(rng)), AttentionMap(r, c)};
  double total = 0.0;
  for (auto& v : inst.attn.values) total += (v = 0.05 + unit(rng));
  for (auto& v : inst.attn.values) v /= total;
  return inst;
}

double max_relative_error(const Instance& inst) {
  const auto grad = attention_loss_gradient(inst.target, inst.attn);
  constexpr double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < inst.attn.size(); ++i) {
    auto plus = inst.attn;
    auto minus = inst.attn;
    plus.values[i] += h;
    minus.values[i] -= h;
    const double fd = (attention_loss(inst.target, plus) - attention_loss(inst.target, minus)) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(grad.values[i]), 1e-8});
    worst = std::max(worst, std::abs(fd - grad.values[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("soften_mask identities") {
  LesionMask m(2, 3, std::vector<std::uint8_t>{1, 0, 0, 1, 1, 0});
  const auto zero = soften_mask(m, 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(zero.values.values[i] == static_cast<double>(m.values[i]));
  const auto one = soften_mask(m, 1.0);
  for (double v : one.values.values) CHECK(v == 1.0);
  const auto mid = soften_mask(m, 0.7);
  CHECK(mid.values(0, 0) == 1.0);
  CHECK(mid.values(0, 1) == 0.7);
  CHECK(mid.rho == 0.7);
  CHECK_THROWS_AS(soften_mask(m, -0.1), Error);
  CHECK_THROWS_AS(soften_mask(m, 1.1), Error);

  // monotone in rho
  double prev = -1.0;
  for (double rho = 0.0; rho <= 1.0; rho += 0.1) {
    const double bg = soften_mask(m, rho).values(0, 1);
    CHECK(bg >= prev);
    prev = bg;
  }
}

TEST_CASE("cosine_alignment and attention_loss examples") {
  SoftMask t{Grid<double>(1, 2, std::vector<double>{1, 0}), 0.0};
  AttentionMap half(1, 2, std::vector<double>{0.5, 0.5});
  CHECK(cosine_alignment(t, half) == doctest::Approx(0.70710678).epsilon(1e-8));
  CHECK(attention_loss(t, half) == doctest::Approx(0.29289322).epsilon(1e-7));

  AttentionMap same(1, 2, std::vector<double>{3, 0});
  CHECK(cosine_alignment(t, same) == doctest::Approx(1.0));
  CHECK(attention_loss(t, same) == doctest::Approx(0.0));

  AttentionMap disjoint(1, 2, std::vector<double>{0, 1});
  CHECK(cosine_alignment(t, disjoint) == 0.0);
  CHECK(attention_loss(t, disjoint) == 1.0);

  AttentionMap wrong_shape(2, 1, std::vector<double>{0.5, 0.5});
  CHECK_THROWS_AS(cosine_alignment(t, wrong_shape), Error);
  AttentionMap zeros(1, 2, std::vector<double>{0, 0});
  CHECK_THROWS_AS(cosine_alignment(t, zeros), Error);
}

TEST_CASE("rho = 1 gives the cosine against the all-ones map") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    auto inst = random_instance(rng);
    LesionMask m(inst.attn.rows, inst.attn.cols, std::uint8_t{0});
    m.values[0] = 1;
    SoftMask ones{Grid<double>(inst.attn.rows, inst.attn.cols, 1.0), 1.0};
    CHECK(cosine_alignment(soften_mask(m, 1.0), inst.attn) == doctest::Approx(cosine_alignment(ones, inst.attn)));
    // continuity near rho = 1
    CHECK(cosine_alignment(soften_mask(m, 1.0 - 1e-9), inst.attn) ==
          doctest::Approx(cosine_alignment(ones, inst.attn)).epsilon(1e-6));
  }
}

TEST_CASE("attention_loss is invariant to positive rescaling") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    auto inst = random_instance(rng);
    const double base = attention_loss(inst.target, inst.attn);
    auto scaled_attn = inst.attn;
    for (auto& v : scaled_attn.values) v *= 7.5;
    auto scaled_target = inst.target;
    for (auto& v : scaled_target.values.values) v *= 0.25;
    CHECK(attention_loss(inst.target, scaled_attn) == doctest::Approx(base).epsilon(1e-12));
    CHECK(attention_loss(scaled_target, inst.attn) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) worst = std::max(worst, max_relative_error(random_instance(rng)));
  CHECK(worst < 1e-4);
}

TEST_CASE("gradient has zero directional derivative along attn and along target at the optimum") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 30; ++i) {
    auto inst = random_instance(rng);
    const auto g = attention_loss_gradient(inst.target, inst.attn);
    double along_attn = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) along_attn += g.values[k] * inst.attn.values[k];
    CHECK(along_attn == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));

    AttentionMap aligned(inst.attn.rows, inst.attn.cols, inst.target.values.values);
    const auto g2 = attention_loss_gradient(inst.target, aligned);
    for (double v : g2.values) CHECK(std::abs(v) < 1e-12);
  }
}

TEST_CASE("is_distribution") {
  CHECK(is_distribution(AttentionMap(2, 2, 0.25)));
  CHECK_FALSE(is_distribution(AttentionMap(2, 2, 0.3)));
  CHECK_FALSE(is_distribution(AttentionMap(1, 2, std::vector<double>{1.5, -0.5})));
}

TEST_CASE("resize_mask and mask files") {
  LesionMask m(4, 4, std::uint8_t{0});
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) m(r, c) = 1;
  const auto small = resize_mask(m, 2, 2);
  CHECK(small == LesionMask(2, 2, std::vector<std::uint8_t>{1, 0, 0, 0}));
  CHECK(resize_mask(m, 4, 4) == m);

  const auto dir = std::filesystem::temp_directory_path() / "lesionattn_guidance_test";
  std::filesystem::create_directories(dir);
  save_mask(m, dir / "m.png");
  CHECK(load_mask(dir / "m.png") == m);
  CHECK_THROWS_AS(load_mask(dir / "absent.png"), Error);
  std::filesystem::remove_all(dir);
}
