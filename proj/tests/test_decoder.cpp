#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pfnmt/decoder.hpp"
#include "reference.hpp"
#include "test_util.hpp"

using namespace pfnmt;

namespace {

struct StepValues {
  ref::Vec s, alpha, c, logprobs;
  std::optional<ref::Vec> sF, sP;
};

struct PassValues {
  std::vector<StepValues> steps;
  std::vector<double> nll;
  ref::Vec s0;
  std::optional<ref::Vec> sF0, sP0;
  double objective_nll = 0.0;
};

PassValues run(const ModelConfig& cfg, const ModelParams& p, const std::vector<int>& src, const std::vector<int>& tgt) {
  Tape t(false);
  const auto vars = bind_model(t, p);
  const auto fp = teacher_forced_pass(cfg, vars, TokenBatch::single(src), TokenBatch::single(tgt));
  PassValues out;
  out.s0 = fp.initial.s.value().values();
  if (fp.initial.sF) out.sF0 = fp.initial.sF->value().values();
  if (fp.initial.sP) out.sP0 = fp.initial.sP->value().values();
  for (std::size_t i = 0; i < fp.steps.size(); ++i) {
    const auto& st = fp.steps[i];
    StepValues v{st.state.s.value().values(), st.alpha.value().values(), st.context.value().values(),
                 st.logprobs.value().values(), std::nullopt, std::nullopt};
    if (st.state.sF) v.sF = st.state.sF->value().values();
    if (st.state.sP) v.sP = st.state.sP->value().values();
    out.steps.push_back(std::move(v));
    out.nll.push_back(fp.nll_steps[i].value()[0]);
  }
  out.objective_nll = objective(cfg, vars, fp).nll.value()[0];
  return out;
}

ModelParams random_params(const ModelConfig& cfg, std::uint64_t seed, double scale = 0.5) {
  ModelParams p = ModelParams::zeros(cfg);
  testutil::randomize(p, seed, scale);
  return p;
}

void expect_near(const ref::Vec& got, const ref::Vec& want, double tol, const std::string& what) {
  ASSERT_EQ(got.size(), want.size()) << what;
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << what << "[" << i << "]";
}

double logsumexp(const ref::Vec& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : x) z += std::exp(v - mx);
  return mx + std::log(z);
}

}  // namespace

TEST(Decoder, BaselineIsBitwiseEqualToIndependentImplementation) {
  const auto cfg = testutil::small_config("baseline");
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    const auto p = random_params(cfg, seed);
    const auto src = testutil::random_sentence(rng, 1 + seed % 6, cfg.src_vocab);
    const auto tgt = testutil::with_eos(testutil::random_sentence(rng, seed % 5, cfg.tgt_vocab));
    const auto got = run(cfg, p, src, tgt);
    const auto want = ref::teacher_forced(cfg, p, src, tgt);
    ASSERT_EQ(got.steps.size(), want.steps.size());
    EXPECT_EQ(got.s0, want.initial.s) << "seed " << seed;
    for (std::size_t t = 0; t < tgt.size(); ++t) {
      EXPECT_EQ(got.steps[t].alpha, want.steps[t].alpha) << "seed " << seed << " step " << t;
      EXPECT_EQ(got.steps[t].c, want.steps[t].c) << "seed " << seed << " step " << t;
      EXPECT_EQ(got.steps[t].s, want.steps[t].state.s) << "seed " << seed << " step " << t;
      EXPECT_EQ(got.steps[t].logprobs, want.steps[t].logprobs) << "seed " << seed << " step " << t;
      EXPECT_EQ(got.nll[t], want.nll[t]);
    }
  }
}

TEST(Decoder, EveryPresetMatchesScalarReference) {
  for (const auto& preset : preset_names()) {
    for (auto timing : {FeedTiming::Previous, FeedTiming::Current}) {
      auto cfg = testutil::small_config(preset);
      cfg.feed_future_timing = timing;
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::mt19937_64 rng(seed);
        const auto p = random_params(cfg, 50 + seed);
        const auto src = testutil::random_sentence(rng, 3, cfg.src_vocab);
        const auto tgt = testutil::with_eos(testutil::random_sentence(rng, 3, cfg.tgt_vocab));
        const auto got = run(cfg, p, src, tgt);
        const auto want = ref::teacher_forced(cfg, p, src, tgt);
        for (std::size_t t = 0; t < tgt.size(); ++t) {
          expect_near(got.steps[t].logprobs, want.steps[t].logprobs, 1e-12, preset + " logprobs");
          expect_near(got.steps[t].alpha, want.steps[t].alpha, 1e-12, preset + " alpha");
          if (cfg.use_future) expect_near(*got.steps[t].sF, *want.steps[t].state.sF, 1e-12, preset + " sF");
          if (cfg.use_past) expect_near(*got.steps[t].sP, *want.steps[t].state.sP, 1e-12, preset + " sP");
        }
      }
    }
  }
}

TEST(Decoder, FeedTimingChangesTheDecoderInput) {
  auto cfg = testutil::small_config("+frnn+prnn");
  const auto p = random_params(cfg, 9);
  const std::vector<int> src{4, 5, 6}, tgt{5, 6, kEosId};
  const auto previous = run(cfg, p, src, tgt);
  cfg.feed_future_timing = FeedTiming::Current;
  const auto current = run(cfg, p, src, tgt);
  EXPECT_EQ(previous.steps[0].alpha, current.steps[0].alpha);
  EXPECT_EQ(*previous.steps[0].sF, *current.steps[0].sF);
  EXPECT_NE(previous.steps[0].s, current.steps[0].s);
}

TEST(Decoder, ZeroParamsGiveUniformDistribution) {
  for (const auto& preset : preset_names()) {
    const auto cfg = testutil::small_config(preset);
    const auto got = run(cfg, ModelParams::zeros(cfg), {4, 5, 6}, {4, kEosId});
    for (const auto& st : got.steps)
      for (double lp : st.logprobs) EXPECT_NEAR(lp, -std::log(7.0), 1e-12) << preset;
  }
}

TEST(Decoder, ZeroParamsThreeTokenTargetCostsThreeLnTen) {
  const auto cfg = testutil::small_config("+frnn+prnn+loss", 4, 10);
  const auto got = run(cfg, ModelParams::zeros(cfg), {4, 5}, {7, 8, kEosId});
  EXPECT_NEAR(got.nll[0] + got.nll[1] + got.nll[2], 3.0 * std::log(10.0), 1e-12);
}

TEST(Decoder, StepDistributionsNormalize) {
  std::mt19937_64 rng(3);
  for (const std::string preset : {"baseline", "+frnn+prnn+loss"}) {
    const auto cfg = testutil::small_config(preset, 5, 12);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto p = random_params(cfg, seed, 3.0);
      const auto got = run(cfg, p, testutil::random_sentence(rng, 4, 12),
                           testutil::with_eos(testutil::random_sentence(rng, 4, 12)));
      for (const auto& st : got.steps) {
        EXPECT_NEAR(logsumexp(st.logprobs), 0.0, 1e-9);
        for (double lp : st.logprobs) EXPECT_LE(lp, 0.0);
      }
    }
  }
}

TEST(Decoder, InitialExtraStates) {
  const auto cfg = testutil::small_config("+frnn+prnn");
  const auto got = run(cfg, random_params(cfg, 4), {4, 5, 6}, {5, kEosId});
  for (double x : *got.sP0) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(*got.sF0, got.s0);
}

TEST(Decoder, NllSumIsMinusLogProbabilityOfTarget) {
  const auto cfg = testutil::small_config("+frnn+prnn+loss");
  const Model m{cfg, random_params(cfg, 5)};
  const std::vector<int> src{4, 6, 5}, tgt{6, 4, 5, kEosId};
  const auto got = run(cfg, m.params, src, tgt);
  double total = 0.0, from_logprobs = 0.0;
  for (std::size_t t = 0; t < tgt.size(); ++t) {
    total += got.nll[t];
    from_logprobs -= got.steps[t].logprobs[static_cast<std::size_t>(tgt[t])];
  }
  EXPECT_EQ(total, from_logprobs);
  EXPECT_NEAR(got.objective_nll, total, 1e-12);
  const auto per_step = sentence_nll(m, src, tgt);
  for (std::size_t t = 0; t < tgt.size(); ++t) EXPECT_EQ(per_step[t], got.nll[t]);
}

TEST(Decoder, PaddedBatchMatchesSingleSentences) {
  std::mt19937_64 rng(6);
  const auto cfg = testutil::small_config("+frnn+prnn+loss");
  const auto p = random_params(cfg, 6);
  std::vector<std::vector<int>> srcs, tgts;
  for (std::size_t k = 0; k < 4; ++k) {
    srcs.push_back(testutil::random_sentence(rng, 1 + k * 2, cfg.src_vocab));
    tgts.push_back(testutil::with_eos(testutil::random_sentence(rng, 3 - k % 3, cfg.tgt_vocab)));
  }
  Tape t(false);
  const auto vars = bind_model(t, p);
  const auto fp = teacher_forced_pass(cfg, vars, TokenBatch::from(srcs), TokenBatch::from(tgts));
  double batched = 0.0, single = 0.0;
  for (const auto& v : fp.nll_steps) batched += v.value()[0];
  for (std::size_t k = 0; k < 4; ++k)
    for (double v : run(cfg, p, srcs[k], tgts[k]).nll) single += v;
  EXPECT_NEAR(batched, single, 1e-10);
}

TEST(Decoder, TargetMustEndWithEos) {
  const auto cfg = testutil::small_config("baseline");
  const auto p = ModelParams::zeros(cfg);
  EXPECT_THROW(run(cfg, p, {4, 5}, {4, 5}), ContractError);
}

TEST(Decoder, OutOfRangeTargetIdIsVocabError) {
  const auto cfg = testutil::small_config("baseline");
  const auto p = ModelParams::zeros(cfg);
  EXPECT_THROW(run(cfg, p, {4, 5}, {static_cast<int>(cfg.tgt_vocab) + 3, kEosId}), VocabError);
}

TEST(Decoder, StateShapeMustMatchConfig) {
  const auto base = testutil::small_config("baseline");
  const auto full = testutil::small_config("+frnn+prnn");
  const auto p = ModelParams::zeros(full);
  Tape t(false);
  const auto vars = bind_model(t, p);
  const auto ann = encode(vars.encoder, TokenBatch::single({4, 5}));
  const auto mem = prepare_memory(vars.attention, ann);
  const auto init = initial_states(full, vars.encoder, ann);
  const std::vector<int> y{kBosId};
  // Baseline-shaped state handed to the combined model.
  EXPECT_THROW(decode_step(full, vars, start_state(base, init), y, mem), ConfigError);
  // Combined parameters under a baseline config.
  EXPECT_THROW(decode_step(base, vars, start_state(base, init), y, mem), ConfigError);
}
