#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <iomanip>
#include <sstream>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pfnmt/data.hpp"
#include "pfnmt/decoder.hpp"

namespace pfnmt {

struct RerankWeights {
  double nll = 1.0;
  double future = 1.0;
  double past = 1.0;
};

struct DecodeOptions {
  std::size_t beam = 12;
  bool greedy = false;  // argmax decoding; ignores beam
  std::size_t max_out_len = 50;  // emitted tokens, EOS included
  bool length_normalize = true;
  RerankWeights rerank;
  std::size_t threads = 1;
};

inline namespace PFNMT_PRECISION_NS {

struct StateValues {
  Tensor s;
  std::optional<Tensor> sF, sP;
};

struct Hypothesis {
  std::vector<int> tokens;  // ends with EOS when finished
  double logprob = 0.0;
  double future_loss = 0.0;  // summed subtraction-loss scores of the emitted tokens
  double past_loss = 0.0;
  std::vector<std::vector<double>> attention;  // per step, one weight per source position
  StateValues state;
  bool finished = false;

  std::size_t length() const { return tokens.size(); }
  double normalized_logprob() const { return tokens.empty() ? 0.0 : logprob / double(tokens.size()); }
  double nll() const { return -logprob; }
  // Tokens without the trailing EOS.
  std::vector<int> words() const {
    std::vector<int> w(tokens);
    if (!w.empty() && w.back() == kEosId) w.pop_back();
    return w;
  }
};

namespace detail {

inline Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  const std::size_t n = t.cols();
  Tensor out({rows.size(), n});
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy_n(t.values().begin() + static_cast<std::ptrdiff_t>(rows[r] * n), n,
                out.values().begin() + static_cast<std::ptrdiff_t>(r * n));
  return out;
}

// k copies of an [I x n] block stacked as [k*I x n].
inline Tensor repeat_block(const Tensor& t, std::size_t k) {
  Tensor out({k * t.rows(), t.cols()});
  for (std::size_t c = 0; c < k; ++c)
    std::copy(t.values().begin(), t.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(c * t.size()));
  return out;
}

inline StateValues state_values(const DecoderState& st) {
  StateValues v{st.s.value(), std::nullopt, std::nullopt};
  if (st.sF) v.sF = st.sF->value();
  if (st.sP) v.sP = st.sP->value();
  return v;
}

inline DecoderState state_vars(Tape& t, const StateValues& v) {
  DecoderState st{t.constant(v.s), std::nullopt, std::nullopt};
  if (v.sF) st.sF = t.constant(*v.sF);
  if (v.sP) st.sP = t.constant(*v.sP);
  return st;
}

template <class H>
StateValues stack_states(const std::vector<H>& hyps) {
  auto stack = [&](auto get) {
    const Tensor& first = get(hyps.front());
    Tensor out({hyps.size(), first.cols()});
    for (std::size_t r = 0; r < hyps.size(); ++r) {
      const Tensor& row = get(hyps[r]);
      std::copy(row.values().begin(), row.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(r * out.cols()));
    }
    return out;
  };
  StateValues v{stack([](const H& h) -> const Tensor& { return h.state.s; }), std::nullopt, std::nullopt};
  if (hyps.front().state.sF) v.sF = stack([](const H& h) -> const Tensor& { return *h.state.sF; });
  if (hyps.front().state.sP) v.sP = stack([](const H& h) -> const Tensor& { return *h.state.sP; });
  return v;
}

inline StateValues row_state(const StateValues& v, std::size_t row) {
  const std::size_t r[] = {row};
  StateValues out{gather_rows(v.s, r), std::nullopt, std::nullopt};
  if (v.sF) out.sF = gather_rows(*v.sF, r);
  if (v.sP) out.sP = gather_rows(*v.sP, r);
  return out;
}

// Per-row aux-loss log-probabilities for one step; empty when the loss is off.
struct AuxStepScores {
  std::optional<Tensor> future, past;  // [k x V], log-probabilities
};

inline AuxStepScores aux_step_scores(const ModelVars& p, const DecoderState& prev, const DecoderState& next) {
  AuxStepScores a;
  if (p.aux.future && prev.sF) a.future = delta_logprobs(*p.aux.future, sub(*prev.sF, *next.sF), p.tgt_embeddings).value();
  if (p.aux.past && prev.sP) a.past = delta_logprobs(*p.aux.past, sub(*next.sP, *prev.sP), p.tgt_embeddings).value();
  return a;
}

// First index of the maximum (lowest id wins ties).
inline std::size_t argmax_row(const Tensor& t, std::size_t row, std::size_t len) {
  const std::size_t n = t.cols();
  std::size_t best = 0;
  for (std::size_t j = 1; j < len; ++j)
    if (t[row * n + j] > t[row * n + best]) best = j;
  return best;
}

inline std::vector<double> attention_row(const Tensor& alpha, std::size_t row, std::size_t len) {
  std::vector<double> out(len);
  for (std::size_t i = 0; i < len; ++i) out[i] = static_cast<double>(alpha(row, i));
  return out;
}

}  // namespace detail

// Greedy argmax decoding of a batch of source sentences.
inline std::vector<Hypothesis> greedy_decode(const Model& model, std::span<const std::vector<int>> srcs,
                                             std::size_t max_out_len) {
  if (srcs.empty()) return {};
  if (max_out_len == 0) throw ConfigError("max_out_len must be at least 1");
  const ModelConfig& cfg = model.config;
  Tape t(false);
  const ModelVars p = bind_model(t, model.params);
  const TokenBatch src = TokenBatch::from(srcs);
  const Annotations ann = encode(p.encoder, src);
  const AttentionMemory mem = prepare_memory(p.attention, ann);
  DecoderState state = start_state(cfg, initial_states(cfg, p.encoder, ann));

  const std::size_t B = srcs.size();
  std::vector<Hypothesis> hyps(B);
  std::vector<int> y_prev(B, kBosId);
  std::size_t open = B;
  for (std::size_t step = 0; step < max_out_len && open > 0; ++step) {
    const DecodeStep ds = decode_step(cfg, p, state, y_prev, mem);
    const auto aux = detail::aux_step_scores(p, state, ds.state);
    const Tensor& lp = ds.logprobs.value();
    const Tensor& alpha = ds.alpha.value();
    for (std::size_t b = 0; b < B; ++b) {
      if (hyps[b].finished) {
        y_prev[b] = kEosId;
        continue;
      }
      const std::size_t y = detail::argmax_row(lp, b, lp.cols());
      Hypothesis& h = hyps[b];
      h.tokens.push_back(static_cast<int>(y));
      h.logprob += static_cast<double>(lp(b, y));
      if (aux.future) h.future_loss -= static_cast<double>((*aux.future)(b, y));
      if (aux.past) h.past_loss -= static_cast<double>((*aux.past)(b, y));
      h.attention.push_back(detail::attention_row(alpha, b, srcs[b].size()));
      y_prev[b] = static_cast<int>(y);
      if (y == static_cast<std::size_t>(kEosId)) {
        h.finished = true;
        h.state = detail::row_state(detail::state_values(ds.state), b);
        --open;
      }
    }
    state = ds.state;
  }
  const StateValues last = detail::state_values(state);
  for (std::size_t b = 0; b < B; ++b)
    if (!hyps[b].finished) hyps[b].state = detail::row_state(last, b);
  return hyps;
}

inline Hypothesis greedy_decode(const Model& model, const std::vector<int>& src, std::size_t max_out_len) {
  return greedy_decode(model, std::span(&src, 1), max_out_len).front();
}

// Beam search over one source sentence. Live hypotheses are stepped as one
// batch; the live width shrinks as hypotheses finish. Candidates are ranked
// by cumulative log-probability (ties: lower parent row, higher step
// log-probability, lower token id). The returned pool (finished hypotheses
// plus any still live at the length cap) is sorted by length-normalized
// log-probability unless disabled.
inline std::vector<Hypothesis> beam_search(const Model& model, const std::vector<int>& src, std::size_t beam,
                                           std::size_t max_out_len, bool length_normalize = true) {
  if (beam < 1) throw ConfigError("beam size must be at least 1");
  if (max_out_len == 0) throw ConfigError("max_out_len must be at least 1");
  const ModelConfig& cfg = model.config;
  Tape t(false);
  const ModelVars p = bind_model(t, model.params);
  const Annotations ann = encode(p.encoder, TokenBatch::single(src));
  const AttentionMemory base = prepare_memory(p.attention, ann);
  const std::size_t I = src.size();

  Hypothesis root;
  root.state = detail::state_values(start_state(cfg, initial_states(cfg, p.encoder, ann)));
  std::vector<Hypothesis> live{root}, done;

  for (std::size_t step = 0; step < max_out_len && !live.empty(); ++step) {
    const std::size_t k = live.size();
    const StateValues stacked = detail::stack_states(live);
    const DecoderState prev = detail::state_vars(t, stacked);
    const AttentionMemory mem{t.constant(detail::repeat_block(base.h.value(), k)),
                              t.constant(detail::repeat_block(base.projected.value(), k)),
                              Mask(k * I, 1), k, I};
    std::vector<int> y_prev(k);
    for (std::size_t r = 0; r < k; ++r) y_prev[r] = live[r].tokens.empty() ? kBosId : live[r].tokens.back();
    const DecodeStep ds = decode_step(cfg, p, prev, y_prev, mem);
    const auto aux = detail::aux_step_scores(p, prev, ds.state);
    const Tensor& lp = ds.logprobs.value();
    const std::size_t V = lp.cols();

    struct Cand {
      double score;
      double step;
      std::size_t row, y;
    };
    std::vector<Cand> cands;
    cands.reserve(k * V);
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t y = 0; y < V; ++y) {
        const double step_lp = static_cast<double>(lp(r, y));
        cands.push_back({live[r].logprob + step_lp, step_lp, r, y});
      }
    }
    const std::size_t width = beam - done.size();
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(std::min(width, cands.size())),
                      cands.end(), [](const Cand& a, const Cand& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.row != b.row) return a.row < b.row;
                        if (a.step != b.step) return a.step > b.step;
                        return a.y < b.y;
                      });
    const StateValues next = detail::state_values(ds.state);
    const Tensor& alpha = ds.alpha.value();
    std::vector<Hypothesis> fresh;
    for (std::size_t c = 0; c < std::min(width, cands.size()); ++c) {
      const Cand& cd = cands[c];
      Hypothesis h = live[cd.row];
      h.tokens.push_back(static_cast<int>(cd.y));
      h.logprob = cd.score;
      if (aux.future) h.future_loss -= static_cast<double>((*aux.future)(cd.row, cd.y));
      if (aux.past) h.past_loss -= static_cast<double>((*aux.past)(cd.row, cd.y));
      h.attention.push_back(detail::attention_row(alpha, cd.row, I));
      h.state = detail::row_state(next, cd.row);
      if (cd.y == static_cast<std::size_t>(kEosId)) {
        h.finished = true;
        done.push_back(std::move(h));
      } else {
        fresh.push_back(std::move(h));
      }
    }
    live = std::move(fresh);
    if (done.size() >= beam) break;
  }
  for (auto& h : live) done.push_back(std::move(h));
  std::stable_sort(done.begin(), done.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    return length_normalize ? a.normalized_logprob() > b.normalized_logprob() : a.logprob > b.logprob;
  });
  return done;
}

inline double rerank_score(const Hypothesis& h, const RerankWeights& w) {
  const double len = h.tokens.empty() ? 1.0 : double(h.tokens.size());
  return w.nll * h.normalized_logprob() - w.future * h.future_loss / len - w.past * h.past_loss / len;
}

// Stable sort by w_nll * logprob/|h| - w_F * future/|h| - w_P * past/|h|.
inline std::vector<Hypothesis> rerank(std::vector<Hypothesis> hyps, const RerankWeights& w) {
  std::stable_sort(hyps.begin(), hyps.end(),
                   [&](const Hypothesis& a, const Hypothesis& b) { return rerank_score(a, w) > rerank_score(b, w); });
  return hyps;
}

// (t, argmax_i alpha_t,i) per emitted word, 1-based; the EOS step is not a
// word and is skipped. Ties go to the smallest i.
inline LinkSet extract_alignment(const Hypothesis& h) {
  LinkSet links;
  const std::size_t words = h.words().size();
  for (std::size_t t = 0; t < std::min(words, h.attention.size()); ++t) {
    const auto& row = h.attention[t];
    if (row.empty()) continue;
    std::size_t best = 0;
    for (std::size_t i = 1; i < row.size(); ++i)
      if (row[i] > row[best]) best = i;
    links.insert(Link{static_cast<int>(t + 1), static_cast<int>(best + 1)});
  }
  return links;
}

// Alignment of a given target (ending with EOS) under teacher forcing: the
// attention argmax of every word step, ties to the smallest i.
inline LinkSet forced_alignment(const Model& model, const std::vector<int>& src, const std::vector<int>& tgt) {
  Tape t(false);
  const ModelVars vars = bind_model(t, model.params);
  const ForwardPass fp = teacher_forced_pass(model.config, vars, TokenBatch::single(src), TokenBatch::single(tgt));
  LinkSet links;
  for (std::size_t step = 0; step + 1 < fp.steps.size(); ++step) {
    const Tensor& a = fp.steps[step].alpha.value();
    std::size_t best = 0;
    for (std::size_t i = 1; i < a.size(); ++i)
      if (a[i] > a[best]) best = i;
    links.insert(Link{static_cast<int>(step + 1), static_cast<int>(best + 1)});
  }
  return links;
}

struct Translation {
  Hypothesis best;
  std::vector<Hypothesis> nbest;  // reranked order
};

// Translates every sentence with beam search, or argmax decoding when
// greedy is set. Sentences are
// independent, so they are split across threads; output order is the input
// order.
inline std::vector<Translation> translate_corpus(const Model& model, std::span<const std::vector<int>> srcs,
                                                 const DecodeOptions& o) {
  if (o.beam < 1) throw ConfigError("beam size must be at least 1");
  std::vector<Translation> out(srcs.size());
  auto work = [&](std::size_t k) {
    if (srcs[k].empty()) throw EmptySourceError("input line " + std::to_string(k + 1) + " is empty");
    std::vector<Hypothesis> hyps;
    if (o.greedy) hyps.push_back(greedy_decode(model, srcs[k], o.max_out_len));
    else hyps = rerank(beam_search(model, srcs[k], o.beam, o.max_out_len, o.length_normalize), o.rerank);
    out[k] = Translation{hyps.front(), std::move(hyps)};
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(o.threads, srcs.size()));
  if (workers == 1) {
    for (std::size_t k = 0; k < srcs.size(); ++k) work(k);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = w; k < srcs.size(); k += workers) work(k);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// "sent_id ||| tokens ||| nll ||| future_loss ||| past_loss"
inline std::string nbest_line(std::size_t sent_id, const Hypothesis& h, const Vocabulary& vocab) {
  std::ostringstream os;
  os << std::setprecision(10) << sent_id << " ||| " << vocab.to_line(h.words()) << " ||| " << h.nll() << " ||| "
     << h.future_loss << " ||| " << h.past_loss;
  return os.str();
}

}  // namespace PFNMT_PRECISION_NS
}  // namespace pfnmt
