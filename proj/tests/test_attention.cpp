#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pfnmt/model.hpp"
#include "reference.hpp"
#include "test_util.hpp"

using namespace pfnmt;

namespace {

struct Outcome {
  Tensor alpha, context;
};

// Attends over one sentence's annotations h ([I x 2 d_enc]).
Outcome run(const AttentionParams& p, const Tensor& s, const Tensor& h, Mask mask = {},
            std::optional<Tensor> sF = std::nullopt, std::optional<Tensor> sP = std::nullopt) {
  Tape t(false);
  const auto vars = bind_attention(t, p);
  const std::size_t I = h.shape()[0];
  if (mask.empty()) mask.assign(I, 1);
  Annotations ann{t.constant(h), mask, 1, I, Var{}, Var{}};
  const auto mem = prepare_memory(vars, ann);
  std::optional<Var> f, q;
  if (sF) f = t.constant(*sF);
  if (sP) q = t.constant(*sP);
  const auto r = attend(vars, t.constant(s), mem, f, q);
  return {r.alpha.value(), r.context.value()};
}

AttentionParams random_attention(const ModelConfig& cfg, std::mt19937_64& rng) {
  auto p = AttentionParams::zeros(cfg);
  AttentionParams::visit(p, [&](const std::string&, Tensor& t) { testutil::fill(t, rng); });
  return p;
}

std::vector<ref::Vec> rows(const Tensor& t) {
  std::vector<ref::Vec> out;
  const std::size_t c = t.shape()[1];
  for (std::size_t r = 0; r < t.shape()[0]; ++r)
    out.emplace_back(t.values().begin() + r * c, t.values().begin() + (r + 1) * c);
  return out;
}

}  // namespace

TEST(Attention, ZeroScoringVectorIsUniform) {
  std::mt19937_64 rng(1);
  const auto cfg = testutil::small_config("baseline", 3);
  auto p = random_attention(cfg, rng);
  p.v_a = Tensor(p.v_a.shape());
  for (std::size_t I : {1u, 2u, 5u}) {
    const Tensor h = testutil::random_tensor({I, 6}, rng);
    const auto r = run(p, testutil::random_tensor({1, 3}, rng), h);
    for (double a : r.alpha.values()) EXPECT_DOUBLE_EQ(a, 1.0 / static_cast<double>(I));
  }
}

TEST(Attention, SingleVisiblePositionTakesAllWeight) {
  std::mt19937_64 rng(2);
  const auto cfg = testutil::small_config("baseline", 3);
  const auto p = random_attention(cfg, rng);
  const Tensor h = testutil::random_tensor({4, 6}, rng);
  const auto r = run(p, testutil::random_tensor({1, 3}, rng), h, {0, 0, 1, 0});
  EXPECT_EQ(r.alpha.values(), (std::vector<Real>{0, 0, 1, 0}));
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(r.context[j], h(2, j));
}

TEST(Attention, MatchesScalarReference) {
  std::mt19937_64 rng(3);
  for (const std::string preset : {"baseline", "+frnn-gru-i", "+prnn", "+frnn+prnn"}) {
    const auto cfg = testutil::small_config(preset, 3);
    for (int trial = 0; trial < 10; ++trial) {
      const auto p = random_attention(cfg, rng);
      const Tensor h = testutil::random_tensor({3, 6}, rng);
      const Tensor s = testutil::random_tensor({1, 3}, rng);
      std::optional<Tensor> sF, sP;
      std::optional<ref::Vec> rF, rP;
      if (cfg.use_future) rF = (sF = testutil::random_tensor({1, 3}, rng))->values();
      if (cfg.use_past) rP = (sP = testutil::random_tensor({1, 3}, rng))->values();
      const auto got = run(p, s, h, {}, sF, sP);
      const auto want = ref::attend(p, s.values(), rows(h), rF, rP);
      for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(got.alpha[i], want.alpha[i], 1e-12) << preset;
      for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(got.context[j], want.c[j], 1e-12) << preset;
    }
  }
}

TEST(Attention, WeightsSumToOneAndContextLiesInHull) {
  std::mt19937_64 rng(4);
  const auto cfg = testutil::small_config("baseline", 4);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = random_attention(cfg, rng);
    for (auto& x : p.v_a.data()) x *= 5.0;
    const std::size_t I = 1 + trial % 7;
    const Tensor h = testutil::random_tensor({I, 8}, rng);
    const auto r = run(p, testutil::random_tensor({1, 4}, rng), h);
    double total = 0.0;
    for (double a : r.alpha.values()) {
      EXPECT_GE(a, 0.0);
      total += a;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    for (std::size_t j = 0; j < 8; ++j) {
      double lo = h(0, j), hi = h(0, j);
      for (std::size_t i = 1; i < I; ++i) lo = std::min<double>(lo, h(i, j)), hi = std::max<double>(hi, h(i, j));
      EXPECT_GE(r.context[j], lo - 1e-12);
      EXPECT_LE(r.context[j], hi + 1e-12);
    }
  }
}

TEST(Attention, MaskedPositionsGetZeroWeight) {
  std::mt19937_64 rng(5);
  const auto cfg = testutil::small_config("baseline", 3);
  const auto p = random_attention(cfg, rng);
  const Tensor h = testutil::random_tensor({5, 6}, rng);
  const Tensor s = testutil::random_tensor({1, 3}, rng);
  const auto masked = run(p, s, h, {1, 1, 1, 0, 0});
  EXPECT_EQ(masked.alpha[3], 0.0);
  EXPECT_EQ(masked.alpha[4], 0.0);
  Tensor prefix({3, 6}, std::vector<Real>(h.values().begin(), h.values().begin() + 18));
  const auto alone = run(p, s, prefix);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(masked.alpha[i], alone.alpha[i], 1e-15);
}

TEST(Attention, StatePresenceMustMatchParameters) {
  std::mt19937_64 rng(6);
  const Tensor h = testutil::random_tensor({2, 6}, rng);
  const Tensor s = testutil::random_tensor({1, 3}, rng);
  const auto base = random_attention(testutil::small_config("baseline", 3), rng);
  const auto fut = random_attention(testutil::small_config("+frnn-gru-i", 3), rng);
  const auto past = random_attention(testutil::small_config("+prnn", 3), rng);
  EXPECT_THROW(run(base, s, h, {}, s), ConfigError);
  EXPECT_THROW(run(base, s, h, {}, std::nullopt, s), ConfigError);
  EXPECT_THROW(run(fut, s, h), ConfigError);
  EXPECT_THROW(run(past, s, h), ConfigError);
}

TEST(Attention, AllMaskedIsInvalid) {
  std::mt19937_64 rng(7);
  const auto p = random_attention(testutil::small_config("baseline", 3), rng);
  const Tensor h = testutil::random_tensor({3, 6}, rng);
  EXPECT_THROW(run(p, testutil::random_tensor({1, 3}, rng), h, {0, 0, 0}), InvalidMaskError);
}

TEST(Attention, ZeroExtraWeightsIgnoreExtraStates) {
  std::mt19937_64 rng(8);
  const auto cfg = testutil::small_config("+frnn+prnn", 3);
  auto p = random_attention(cfg, rng);
  *p.V_f = Tensor(p.V_f->shape());
  *p.V_p = Tensor(p.V_p->shape());
  const Tensor h = testutil::random_tensor({4, 6}, rng);
  const Tensor s = testutil::random_tensor({1, 3}, rng);
  const auto a = run(p, s, h, {}, testutil::random_tensor({1, 3}, rng), testutil::random_tensor({1, 3}, rng));
  const auto b = run(p, s, h, {}, testutil::random_tensor({1, 3}, rng), testutil::random_tensor({1, 3}, rng));
  EXPECT_EQ(a.alpha, b.alpha);
}
