#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pfnmt/cells.hpp"
#include "pfnmt/model_config.hpp"
#include "pfnmt/ops.hpp"

namespace pfnmt {
inline namespace PFNMT_PRECISION_NS {

struct EncoderParams {
  Tensor src_embeddings;  // [V_src x e]
  GruParams fwd, bwd;     // state d_enc, input e
  Tensor W_s, b_s;        // [d_dec x 2 d_enc], [d_dec]
  std::optional<Tensor> W_sF, b_sF;  // separate Future-layer initializer

  static EncoderParams zeros(const ModelConfig& cfg) {
    EncoderParams p;
    p.src_embeddings = Tensor({cfg.src_vocab, cfg.emb});
    p.fwd = GruParams::zeros(cfg.enc, cfg.emb);
    p.bwd = GruParams::zeros(cfg.enc, cfg.emb);
    p.W_s = Tensor({cfg.dec, cfg.annotation_dim()});
    p.b_s = Tensor({cfg.dec});
    if (cfg.use_future && cfg.separate_future_init) {
      p.W_sF = Tensor({cfg.dec, cfg.annotation_dim()});
      p.b_sF = Tensor({cfg.dec});
    }
    return p;
  }

  void init(Rng& rng) {
    fill_uniform(src_embeddings, rng, -0.08, 0.08);
    fwd.init(rng);
    bwd.init(rng);
    fill_uniform(W_s, rng, -0.08, 0.08);
    if (W_sF) fill_uniform(*W_sF, rng, -0.08, 0.08);
  }

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f("encoder.src_embeddings", self.src_embeddings);
    GruParams::visit(self.fwd, "encoder.fwd", f);
    GruParams::visit(self.bwd, "encoder.bwd", f);
    f("encoder.W_s", self.W_s);
    f("encoder.b_s", self.b_s);
    if (self.W_sF) {
      f("encoder.W_sF", *self.W_sF);
      f("encoder.b_sF", *self.b_sF);
    }
  }
};

struct EncoderVars {
  Var src_embeddings;
  GruVars fwd, bwd;
  Var W_s, b_s;
  std::optional<Var> W_sF, b_sF;
};

template <class P>
EncoderVars bind_encoder(Tape& t, P& p) {
  EncoderVars v{t.param(p.src_embeddings), bind_gru(t, p.fwd), bind_gru(t, p.bwd), t.param(p.W_s),
                t.param(p.b_s), std::nullopt, std::nullopt};
  if (p.W_sF) {
    v.W_sF = t.param(*p.W_sF);
    v.b_sF = t.param(*p.b_sF);
  }
  return v;
}

// Right-padded batch of token sequences, row-major [batch x length].
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<int> ids;
  Mask mask;

  int at(std::size_t b, std::size_t i) const { return ids[b * length + i]; }
  bool real(std::size_t b, std::size_t i) const { return mask[b * length + i] != 0; }

  std::vector<int> column(std::size_t i) const {
    std::vector<int> col(batch);
    for (std::size_t b = 0; b < batch; ++b) col[b] = ids[b * length + i];
    return col;
  }
  std::vector<Real> column_mask(std::size_t i) const {
    std::vector<Real> col(batch);
    for (std::size_t b = 0; b < batch; ++b) col[b] = mask[b * length + i] ? 1.0 : 0.0;
    return col;
  }
  std::size_t real_count() const {
    std::size_t n = 0;
    for (auto m : mask) n += m != 0;
    return n;
  }

  // Pads to the longest sequence (or to min_length if larger).
  static TokenBatch from(std::span<const std::vector<int>> seqs, std::size_t min_length = 0) {
    TokenBatch tb;
    tb.batch = seqs.size();
    tb.length = min_length;
    for (const auto& s : seqs) tb.length = std::max(tb.length, s.size());
    tb.ids.assign(tb.batch * tb.length, kPadId);
    tb.mask.assign(tb.batch * tb.length, 0);
    for (std::size_t b = 0; b < tb.batch; ++b)
      for (std::size_t i = 0; i < seqs[b].size(); ++i) {
        tb.ids[b * tb.length + i] = seqs[b][i];
        tb.mask[b * tb.length + i] = 1;
      }
    return tb;
  }

  static TokenBatch single(const std::vector<int>& seq) { return from(std::span(&seq, 1)); }
};

// h is [B*I x 2 d_enc] (row b*I + i is h_i of sentence b). fwd_last and
// bwd_first are the summary halves [->h_I ; <-h_1].
struct Annotations {
  Var h;
  Mask mask;
  std::size_t batch = 0;
  std::size_t length = 0;
  Var fwd_last;
  Var bwd_first;
};

// Bidirectional GRU over the source. Padded positions hold the running state
// (forward) or keep the zero start state (backward), so real positions see
// exactly what an unpadded run computes.
inline Annotations encode(const EncoderVars& p, const TokenBatch& src) {
  if (src.batch == 0 || src.length == 0) throw EmptySourceError("encode: empty source");
  for (std::size_t b = 0; b < src.batch; ++b) {
    if (!src.real(b, 0)) throw EmptySourceError("encode: source sentence " + std::to_string(b) + " is empty");
  }
  const std::size_t vocab = p.src_embeddings.value().shape()[0];
  for (std::size_t k = 0; k < src.ids.size(); ++k) {
    if (src.mask[k] && (src.ids[k] < 0 || static_cast<std::size_t>(src.ids[k]) >= vocab)) {
      throw VocabError("source id " + std::to_string(src.ids[k]) + " out of range for vocabulary of " +
                       std::to_string(vocab));
    }
  }
  Tape& t = *p.src_embeddings.tape;
  const std::size_t d = p.fwd.state, I = src.length;

  std::vector<Var> inputs(I);
  std::vector<std::vector<Real>> keep(I);
  std::vector<bool> has_pad(I, false);
  for (std::size_t i = 0; i < I; ++i) {
    const auto col = src.column(i);
    inputs[i] = embedding(p.src_embeddings, col, kPadId);
    keep[i] = src.column_mask(i);
    for (Real k : keep[i]) has_pad[i] = has_pad[i] || k == 0.0;
  }

  std::vector<Var> fwd(I), bwd(I);
  Var h = t.constant(Tensor({src.batch, d}));
  for (std::size_t i = 0; i < I; ++i) {
    Var next = gru_step(p.fwd, h, inputs[i]);
    h = has_pad[i] ? hold_rows(next, h, keep[i]) : next;
    fwd[i] = h;
  }
  h = t.constant(Tensor({src.batch, d}));
  for (std::size_t i = I; i-- > 0;) {
    Var next = gru_step(p.bwd, h, inputs[i]);
    h = has_pad[i] ? hold_rows(next, h, keep[i]) : next;
    bwd[i] = h;
  }

  std::vector<Var> rows(I);
  for (std::size_t i = 0; i < I; ++i) rows[i] = concat({fwd[i], bwd[i]});
  return Annotations{stack_positions(rows), src.mask, src.batch, I, fwd[I - 1], bwd[0]};
}

struct InitialStates {
  Var s0, sF0, sP0;
};

// s_0 = tanh(W_s [->h_I ; <-h_1] + b_s); the Future layer starts from the same
// summary projection (or its own when configured); the Past layer from zero.
inline InitialStates initial_states(const ModelConfig& cfg, const EncoderVars& p, const Annotations& ann) {
  if (ann.length == 0) throw EmptySourceError("initial_states: empty annotations");
  Tape& t = *p.W_s.tape;
  const Var summary = concat({ann.fwd_last, ann.bwd_first});
  const Var zero = t.constant(Tensor({ann.batch, cfg.dec}));
  InitialStates st;
  st.s0 = cfg.decoder_init == InitMode::Zero ? zero : tanh(linear(summary, p.W_s, p.b_s));
  if (cfg.future_init == InitMode::Zero) {
    st.sF0 = zero;
  } else if (p.W_sF) {
    st.sF0 = tanh(linear(summary, *p.W_sF, *p.b_sF));
  } else if (cfg.decoder_init == InitMode::Zero) {
    st.sF0 = tanh(linear(summary, p.W_s, p.b_s));
  } else {
    st.sF0 = st.s0;
  }
  st.sP0 = zero;
  return st;
}

}  // namespace PFNMT_PRECISION_NS
}  // namespace pfnmt
