#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pfnmt/attention.hpp"
#include "pfnmt/cells.hpp"
#include "pfnmt/encoder.hpp"
#include "pfnmt/model.hpp"
#include "pfnmt/objective.hpp"

namespace pfnmt {
inline namespace PFNMT_PRECISION_NS {

// Recurrent state carried between decode steps.
struct DecoderState {
  Var s;
  std::optional<Var> sF;
  std::optional<Var> sP;
};

struct DecodeStep {
  DecoderState state;
  Var context;   // c_t
  Var alpha;     // [B x I]
  Var logprobs;  // [B x V_tgt]
};

namespace detail {

inline void check_state(const ModelConfig& cfg, const DecoderState& st) {
  if (st.sF.has_value() != cfg.use_future || st.sP.has_value() != cfg.use_past) {
    throw ConfigError("decode_step: decoder state does not match the model configuration");
  }
}

}  // namespace detail

inline DecoderState start_state(const ModelConfig& cfg, const InitialStates& init) {
  DecoderState st{init.s0, std::nullopt, std::nullopt};
  if (cfg.use_future) st.sF = init.sF0;
  if (cfg.use_past) st.sP = init.sP0;
  return st;
}

// One decoder step:
//   (alpha, c) = attend(s_{t-1}, h, s^F_{t-1}, s^P_{t-1})
//   s^F_t = Future(s^F_{t-1}, c), s^P_t = GRU(s^P_{t-1}, c)
//   s_t = GRU(s_{t-1}, [E(y_{t-1}); c; s^F_{t or t-1}; s^P_{t-1}])
//   logprobs = log softmax(W_o2 tanh(W_o1 [E(y_{t-1}); s_t; c] + b_o1) + b_o2)
inline DecodeStep decode_step(const ModelConfig& cfg, const ModelVars& p, const DecoderState& prev,
                              std::span<const int> y_prev, const AttentionMemory& mem) {
  detail::check_state(cfg, prev);
  if (cfg.use_future != p.future.has_value() || cfg.use_past != p.past.has_value()) {
    throw ConfigError("decode_step: parameters do not match the model configuration");
  }
  if (y_prev.size() != mem.batch) throw DimensionError("decode_step: previous-token batch does not match memory");

  const auto att = attend(p.attention, prev.s, mem, prev.sF, prev.sP);
  const Var c = att.context;

  DecoderState next;
  if (cfg.use_future) {
    const Var c_in = p.future->ctx_proj ? linear(c, *p.future->ctx_proj) : c;
    next.sF = future_step(p.future->kind, p.future->cell, *prev.sF, c_in);
  }
  if (cfg.use_past) next.sP = past_step(*p.past, *prev.sP, c);

  const Var emb = embedding(p.tgt_embeddings, y_prev, kPadId);
  std::vector<Var> inputs{emb, c};
  if (cfg.use_future) inputs.push_back(cfg.feed_future_timing == FeedTiming::Current ? *next.sF : *prev.sF);
  if (cfg.use_past) inputs.push_back(*prev.sP);
  next.s = gru_step(p.dec_cell, prev.s, concat(inputs));

  const Var hidden = tanh(linear(concat({emb, next.s, c}), p.W_o1, p.b_o1));
  const Var logprobs = log_softmax(linear(hidden, p.W_o2, p.b_o2));
  return DecodeStep{next, c, att.alpha, logprobs};
}

// Everything a forward pass over a (source, target) batch produces.
struct ForwardPass {
  std::vector<DecodeStep> steps;
  std::vector<Var> nll_steps;                  // scalar per step, padding-weighted
  std::vector<StepDeltas> deltas;              // per step when a loss is on
  std::vector<std::vector<int>> gold_steps;    // y_t column per step
  std::vector<std::vector<Real>> weight_steps;
  DecoderState initial;
  std::size_t tokens = 0;                      // real target tokens
};

// Teacher-forced pass: encode, initialize, then feed gold y_{t-1} (BOS first).
// tgt holds target sequences that end with EOS.
inline ForwardPass teacher_forced_pass(const ModelConfig& cfg, const ModelVars& p, const TokenBatch& src,
                                       const TokenBatch& tgt) {
  if (tgt.batch != src.batch) throw DimensionError("teacher_forced_pass: source/target batch mismatch");
  for (std::size_t b = 0; b < tgt.batch; ++b) {
    std::size_t len = 0;
    while (len < tgt.length && tgt.real(b, len)) ++len;
    if (len == 0 || tgt.at(b, len - 1) != kEosId) {
      throw ContractError("teacher_forced_pass: target sentence " + std::to_string(b) + " must end with EOS");
    }
  }
  const Annotations ann = encode(p.encoder, src);
  const InitialStates init = initial_states(cfg, p.encoder, ann);
  const AttentionMemory mem = prepare_memory(p.attention, ann);

  ForwardPass fp;
  fp.initial = start_state(cfg, init);
  fp.tokens = tgt.real_count();
  DecoderState state = fp.initial;
  std::vector<int> y_prev(tgt.batch, kBosId);
  for (std::size_t t = 0; t < tgt.length; ++t) {
    DecodeStep step = decode_step(cfg, p, state, y_prev, mem);
    auto gold = tgt.column(t);
    auto weight = tgt.column_mask(t);
    fp.nll_steps.push_back(pick_nll(step.logprobs, gold, weight));
    if (cfg.use_losses) {
      StepDeltas d;
      if (cfg.use_future) d.dF = sub(*state.sF, *step.state.sF);
      if (cfg.use_past) d.dP = sub(*step.state.sP, *state.sP);
      fp.deltas.push_back(d);
    }
    state = step.state;
    fp.steps.push_back(step);
    y_prev = gold;
    fp.gold_steps.push_back(std::move(gold));
    fp.weight_steps.push_back(std::move(weight));
  }
  return fp;
}

inline ObjectiveTerms objective(const ModelConfig& cfg, const ModelVars& p, const ForwardPass& fp) {
  return total_objective(cfg, fp.nll_steps, fp.deltas, p.aux, p.tgt_embeddings, fp.gold_steps, fp.weight_steps);
}

// Per-step negative log-likelihoods of a single pair.
inline std::vector<Real> sentence_nll(const Model& m, const std::vector<int>& src, const std::vector<int>& tgt) {
  Tape t(false);
  const ModelVars vars = bind_model(t, m.params);
  const ForwardPass fp = teacher_forced_pass(m.config, vars, TokenBatch::single(src), TokenBatch::single(tgt));
  std::vector<Real> out;
  for (const auto& v : fp.nll_steps) out.push_back(v.value()[0]);
  return out;
}

}  // namespace PFNMT_PRECISION_NS
}  // namespace pfnmt
