#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pfnmt/model_config.hpp"
#include "pfnmt/ops.hpp"

namespace pfnmt {
inline namespace PFNMT_PRECISION_NS {

// Bilinear scorers l(u, v) = u^T W v + b for the Future (subtraction) and
// Past (addition) losses.
struct AuxLossParams {
  std::optional<Tensor> W_F, b_F;  // [d_dec x e], [1]
  std::optional<Tensor> W_P, b_P;

  static AuxLossParams zeros(const ModelConfig& cfg) {
    AuxLossParams p;
    if (cfg.future_loss_on()) {
      p.W_F = Tensor({cfg.dec, cfg.emb});
      p.b_F = Tensor({1});
    }
    if (cfg.past_loss_on()) {
      p.W_P = Tensor({cfg.dec, cfg.emb});
      p.b_P = Tensor({1});
    }
    return p;
  }

  void init(Rng& rng) {
    if (W_F) fill_uniform(*W_F, rng, -0.08, 0.08);
    if (W_P) fill_uniform(*W_P, rng, -0.08, 0.08);
  }

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    if (self.W_F) {
      f("aux.W_F", *self.W_F);
      f("aux.b_F", *self.b_F);
    }
    if (self.W_P) {
      f("aux.W_P", *self.W_P);
      f("aux.b_P", *self.b_P);
    }
  }
};

struct BilinearVars {
  Var W, b;
};

struct AuxLossVars {
  std::optional<BilinearVars> future, past;
};

template <class P>
AuxLossVars bind_aux(Tape& t, P& p) {
  AuxLossVars v;
  if (p.W_F) v.future = BilinearVars{t.param(*p.W_F), t.param(*p.b_F)};
  if (p.W_P) v.past = BilinearVars{t.param(*p.W_P), t.param(*p.b_P)};
  return v;
}

// dF = s^F_{t-1} - s^F_t, dP = s^P_t - s^P_{t-1}.
struct StepDeltas {
  std::optional<Var> dF, dP;
};

// log softmax over the vocabulary of delta^T W E(y) + b, one row per delta.
// b shifts every score equally and cancels in the normalization; it stays on
// the tape (as b - b) so its gradient, which is exactly zero, is reported.
inline Var delta_logprobs(const BilinearVars& scorer, Var delta, Var tgt_embeddings) {
  const Var scores = matmul_nt(matmul(delta, scorer.W), tgt_embeddings);
  return add(log_softmax(scores), sub(scorer.b, scorer.b));
}

// sum_b weight[b] * -log softmax(l(delta_b, E(.)))[gold_b].
inline Var delta_loss(const BilinearVars& scorer, Var delta, std::span<const int> gold, Var tgt_embeddings,
                      std::span<const Real> weight) {
  return pick_nll(delta_logprobs(scorer, delta, tgt_embeddings), gold, weight);
}

inline Var delta_loss(const BilinearVars& scorer, Var delta, std::span<const int> gold, Var tgt_embeddings) {
  const std::vector<Real> ones(gold.size(), 1.0);
  return delta_loss(scorer, delta, gold, tgt_embeddings, ones);
}

// Value-level single-delta form.
inline Real delta_loss(const Tensor& W, Real b, const Tensor& delta, int gold, const Tensor& tgt_embeddings) {
  Tape t(false);
  const BilinearVars scorer{t.param(W), t.constant(Tensor::scalar(b))};
  const int g[] = {gold};
  return delta_loss(scorer, t.constant(delta), g, t.param(tgt_embeddings)).value()[0];
}

struct ObjectiveTerms {
  Var total;
  Var nll;
  std::optional<Var> future;
  std::optional<Var> past;
};

// sum_t [ nll_t + w_F * loss(dF_t, y_t) + w_P * loss(dP_t, y_t) ]; each
// per-step term is already summed over the batch with padding weights.
inline ObjectiveTerms total_objective(const ModelConfig& cfg, std::span<const Var> nll_steps,
                                      std::span<const StepDeltas> deltas, const AuxLossVars& aux,
                                      Var tgt_embeddings, std::span<const std::vector<int>> gold_steps,
                                      std::span<const std::vector<Real>> weight_steps) {
  if (nll_steps.empty()) throw ContractError("total_objective: no target steps");
  if (gold_steps.size() != nll_steps.size() || weight_steps.size() != nll_steps.size()) {
    throw ContractError("total_objective: gold/weight steps do not match nll steps");
  }
  const bool want_f = cfg.future_loss_on(), want_p = cfg.past_loss_on();
  if ((want_f || want_p) && deltas.size() != nll_steps.size()) {
    throw ContractError("total_objective: expected one delta pair per target step");
  }
  if ((want_f && !aux.future) || (want_p && !aux.past)) {
    throw ConfigError("total_objective: auxiliary loss parameters missing for enabled loss");
  }
  Tape& t = *nll_steps.front().tape;
  Var nll = nll_steps.front();
  for (std::size_t i = 1; i < nll_steps.size(); ++i) nll = add(nll, nll_steps[i]);

  ObjectiveTerms out{nll, nll, std::nullopt, std::nullopt};
  auto accumulate = [&](const BilinearVars& scorer, bool future) {
    Var acc = t.constant(Tensor::scalar(0.0));
    for (std::size_t i = 0; i < nll_steps.size(); ++i) {
      const auto& delta = future ? deltas[i].dF : deltas[i].dP;
      if (!delta) throw ContractError("total_objective: missing delta at step " + std::to_string(i));
      acc = add(acc, delta_loss(scorer, *delta, gold_steps[i], tgt_embeddings, weight_steps[i]));
    }
    return acc;
  };
  if (want_f) {
    out.future = accumulate(*aux.future, true);
    out.total = add(out.total, cfg.future_loss_weight == 1.0 ? *out.future : scale(*out.future, cfg.future_loss_weight));
  }
  if (want_p) {
    out.past = accumulate(*aux.past, false);
    out.total = add(out.total, cfg.past_loss_weight == 1.0 ? *out.past : scale(*out.past, cfg.past_loss_weight));
  }
  return out;
}

}  // namespace PFNMT_PRECISION_NS
}  // namespace pfnmt
