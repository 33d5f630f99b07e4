#pragma once

#include <optional>

#include "pfnmt/encoder.hpp"
#include "pfnmt/model_config.hpp"
#include "pfnmt/ops.hpp"

namespace pfnmt {
inline namespace PFNMT_PRECISION_NS {

struct AttentionParams {
  Tensor W_a;                 // [d_a x d_dec]
  Tensor U_a;                 // [d_a x 2 d_enc]
  std::optional<Tensor> V_f;  // [d_a x d_dec], Future-aware scoring
  std::optional<Tensor> V_p;  // [d_a x d_dec], Past-aware scoring
  Tensor v_a, b_a;            // [d_a]

  static AttentionParams zeros(const ModelConfig& cfg) {
    AttentionParams p;
    const std::size_t da = cfg.att_dim();
    p.W_a = Tensor({da, cfg.dec});
    p.U_a = Tensor({da, cfg.annotation_dim()});
    if (cfg.use_future) p.V_f = Tensor({da, cfg.dec});
    if (cfg.use_past) p.V_p = Tensor({da, cfg.dec});
    p.v_a = Tensor({da});
    p.b_a = Tensor({da});
    return p;
  }

  void init(Rng& rng) {
    for (Tensor* t : {&W_a, &U_a, &v_a}) fill_uniform(*t, rng, -0.08, 0.08);
    if (V_f) fill_uniform(*V_f, rng, -0.08, 0.08);
    if (V_p) fill_uniform(*V_p, rng, -0.08, 0.08);
  }

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f("attention.W_a", self.W_a);
    f("attention.U_a", self.U_a);
    if (self.V_f) f("attention.V_f", *self.V_f);
    if (self.V_p) f("attention.V_p", *self.V_p);
    f("attention.v_a", self.v_a);
    f("attention.b_a", self.b_a);
  }
};

struct AttentionVars {
  Var W_a, U_a;
  std::optional<Var> V_f, V_p;
  Var v_a, b_a;
};

template <class P>
AttentionVars bind_attention(Tape& t, P& p) {
  AttentionVars v{t.param(p.W_a), t.param(p.U_a), std::nullopt, std::nullopt, t.param(p.v_a), t.param(p.b_a)};
  if (p.V_f) v.V_f = t.param(*p.V_f);
  if (p.V_p) v.V_p = t.param(*p.V_p);
  return v;
}

// Annotations plus their step-independent projection U_a h_i.
struct AttentionMemory {
  Var h;
  Var projected;  // [B*I x d_a]
  Mask mask;
  std::size_t batch = 0;
  std::size_t length = 0;
};

inline AttentionMemory prepare_memory(const AttentionVars& p, const Annotations& ann) {
  return AttentionMemory{ann.h, linear(ann.h, p.U_a), ann.mask, ann.batch, ann.length};
}

struct AttentionResult {
  Var alpha;    // [B x I]
  Var context;  // [B x 2 d_enc]
};

// score_i = v_a^T tanh(U_a h_i + (W_a s + V_f s^F + V_p s^P + b_a)), absent
// terms dropped; alpha = masked softmax(score); c = sum_i alpha_i h_i.
inline AttentionResult attend(const AttentionVars& p, Var s_prev, const AttentionMemory& mem,
                              std::optional<Var> sF_prev = std::nullopt,
                              std::optional<Var> sP_prev = std::nullopt) {
  if (sF_prev.has_value() != p.V_f.has_value()) {
    throw ConfigError("attend: Future state supplied/required mismatch with attention parameters");
  }
  if (sP_prev.has_value() != p.V_p.has_value()) {
    throw ConfigError("attend: Past state supplied/required mismatch with attention parameters");
  }
  Var q = linear(s_prev, p.W_a);
  if (sF_prev) q = add(q, linear(*sF_prev, *p.V_f));
  if (sP_prev) q = add(q, linear(*sP_prev, *p.V_p));
  q = add_bias(q, p.b_a);

  const std::size_t da = p.v_a.value().size();
  const Var energy = tanh(add_grouped(mem.projected, q, mem.length));
  const Var scores = reshape(matmul_nt(energy, reshape(p.v_a, {1, da})), {mem.batch, mem.length});
  const Var alpha = softmax(scores, &mem.mask);
  return AttentionResult{alpha, weighted_sum(alpha, mem.h)};
}

}  // namespace PFNMT_PRECISION_NS
}  // namespace pfnmt
