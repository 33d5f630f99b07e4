#include <gtest/gtest.h>

#include <random>

#include "pfnmt/model.hpp"
#include "reference.hpp"
#include "test_util.hpp"

using namespace pfnmt;

namespace {

struct Encoding {
  Tensor h, fwd_last, bwd_first;
  Tensor s0, sF0, sP0;
};

Encoding run(const ModelConfig& cfg, const ModelParams& p, const std::vector<std::vector<int>>& srcs,
             std::size_t min_len = 0) {
  Tape t(false);
  const auto vars = bind_encoder(t, p.encoder);
  const auto ann = encode(vars, TokenBatch::from(srcs, min_len));
  const auto st = initial_states(cfg, vars, ann);
  Encoding e;
  e.h = ann.h.value();
  e.fwd_last = ann.fwd_last.value();
  e.bwd_first = ann.bwd_first.value();
  e.s0 = st.s0.value();
  e.sF0 = st.sF0.value();
  e.sP0 = st.sP0.value();
  return e;
}

ModelParams random_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = ModelParams::zeros(cfg);
  testutil::randomize(p, seed);
  return p;
}

// Row r of a [rows x cols] tensor.
ref::Vec row_of(const Tensor& t, std::size_t r) {
  const std::size_t c = t.shape()[1];
  return ref::Vec(t.values().begin() + r * c, t.values().begin() + (r + 1) * c);
}

}  // namespace

TEST(Encoder, ZeroParamsGiveZeroAnnotations) {
  const auto cfg = testutil::small_config("baseline");
  const auto e = run(cfg, ModelParams::zeros(cfg), {{4, 5, 6}});
  for (double x : e.h.values()) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(e.h.shape(), (Shape{3, 2 * cfg.enc}));
}

TEST(Encoder, SingleTokenAnnotationIsBothDirectionsOfOneStep) {
  const auto cfg = testutil::small_config("baseline");
  const auto p = random_params(cfg, 1);
  const auto e = run(cfg, p, {{5}});
  const ref::Vec zero(cfg.enc, 0.0);
  const ref::Vec x = ref::row(p.encoder.src_embeddings, 5);
  const ref::Vec want = ref::cat({ref::gru(p.encoder.fwd, zero, x), ref::gru(p.encoder.bwd, zero, x)});
  EXPECT_EQ(row_of(e.h, 0), want);
  EXPECT_EQ(e.fwd_last.values(), ref::gru(p.encoder.fwd, zero, x));
  EXPECT_EQ(e.bwd_first.values(), ref::gru(p.encoder.bwd, zero, x));
}

TEST(Encoder, MatchesScalarReference) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto cfg = testutil::small_config("baseline", 3 + trial % 3);
    const auto p = random_params(cfg, 100 + trial);
    const auto src = testutil::random_sentence(rng, 1 + trial % 5, cfg.src_vocab);
    const auto e = run(cfg, p, {src});
    const auto want = ref::encode(p.encoder, src);
    for (std::size_t i = 0; i < src.size(); ++i) EXPECT_EQ(row_of(e.h, i), want.h[i]) << "position " << i;
    EXPECT_EQ(e.s0.values(), ref::summary_state(p.encoder.W_s, p.encoder.b_s, want));
  }
}

TEST(Encoder, ZeroSummaryWeightsGiveZeroInitialState) {
  const auto cfg = testutil::small_config("baseline");
  auto p = random_params(cfg, 3);
  p.encoder.W_s = Tensor(p.encoder.W_s.shape());
  p.encoder.b_s = Tensor(p.encoder.b_s.shape());
  const auto e = run(cfg, p, {{4, 5, 6}});
  for (double x : e.s0.values()) EXPECT_EQ(x, 0.0);
}

TEST(Encoder, PastStartsAtZeroAndFutureAtDecoderState) {
  const auto cfg = testutil::small_config("+frnn+prnn+loss");
  const auto p = random_params(cfg, 4);
  const auto e = run(cfg, p, {{4, 5, 6, 4}});
  for (double x : e.sP0.values()) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(e.sF0, e.s0);
}

TEST(Encoder, PaddingDoesNotChangeRealPositions) {
  std::mt19937_64 rng(5);
  const auto cfg = testutil::small_config("baseline");
  const auto p = random_params(cfg, 5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = testutil::random_sentence(rng, 2 + trial % 3, cfg.src_vocab);
    const auto b = testutil::random_sentence(rng, 6, cfg.src_vocab);
    const auto alone = run(cfg, p, {a});
    const auto batched = run(cfg, p, {a, b}, 8);
    const std::size_t L = 8;
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(row_of(batched.h, i), row_of(alone.h, i));
    EXPECT_EQ(row_of(batched.fwd_last, 0), alone.fwd_last.values());
    EXPECT_EQ(row_of(batched.bwd_first, 0), alone.bwd_first.values());
    EXPECT_EQ(row_of(batched.s0, 0), alone.s0.values());
    const auto b_alone = run(cfg, p, {b});
    for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(row_of(batched.h, L + i), row_of(b_alone.h, i));
  }
}

TEST(Encoder, ForwardHalfDependsOnlyOnPrefixBackwardOnlyOnSuffix) {
  const auto cfg = testutil::small_config("baseline");
  const auto p = random_params(cfg, 6);
  const std::size_t d = cfg.enc;
  const auto short_ = run(cfg, p, {{4, 5, 6}});
  const auto appended = run(cfg, p, {{4, 5, 6, 5, 4}});
  const auto prepended = run(cfg, p, {{6, 6, 4, 5, 6}});
  for (std::size_t i = 0; i < 3; ++i) {
    const auto s = row_of(short_.h, i);
    const auto a = row_of(appended.h, i);
    const auto q = row_of(prepended.h, i + 2);
    EXPECT_EQ(ref::Vec(a.begin(), a.begin() + d), ref::Vec(s.begin(), s.begin() + d));
    EXPECT_EQ(ref::Vec(q.begin() + d, q.end()), ref::Vec(s.begin() + d, s.end()));
  }
}

TEST(Encoder, EmptySourceIsRejected) {
  const auto cfg = testutil::small_config("baseline");
  const auto p = ModelParams::zeros(cfg);
  EXPECT_THROW(run(cfg, p, {{}}), EmptySourceError);
  EXPECT_THROW(run(cfg, p, {{4, 5}, {}}), EmptySourceError);
}

TEST(Encoder, OutOfRangeIdIsVocabError) {
  const auto cfg = testutil::small_config("baseline");
  const auto p = ModelParams::zeros(cfg);
  EXPECT_THROW(run(cfg, p, {{4, static_cast<int>(cfg.src_vocab)}}), VocabError);
  EXPECT_THROW(run(cfg, p, {{-1}}), VocabError);
}

TEST(Encoder, GradientsFlowIntoEveryEncoderParameter) {
  const auto cfg = testutil::small_config("baseline");
  auto p = random_params(cfg, 7);
  Tape t;
  const auto vars = bind_encoder(t, p.encoder);
  const auto ann = encode(vars, TokenBatch::single({4, 5, 6}));
  const auto st = initial_states(cfg, vars, ann);
  t.backward(add(sum(ann.h), sum(st.s0)));
  EncoderParams::visit(p.encoder, [&](const std::string& name, Tensor& tensor) {
    double norm = 0.0;
    for (double g : tensor.grad()) norm += g * g;
    EXPECT_GT(norm, 0.0) << name;
  });
}
