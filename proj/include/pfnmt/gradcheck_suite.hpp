#pragma once

#include <string>
#include <vector>

#include "pfnmt/decoder.hpp"
#include "pfnmt/gradcheck.hpp"
#include "pfnmt/gradcheck_report.hpp"
#include "pfnmt/model_config.hpp"

namespace pfnmt {
inline namespace PFNMT_PRECISION_NS {

namespace detail {

inline GradcheckEntry summarize(std::string module, const GradCheckResult& r, double tol) {
  GradcheckEntry e{std::move(module), r.max_rel_error, "", {}};
  if (const auto* w = r.worst()) e.worst_param = w->name;
  for (const auto& p : r.per_param)
    if (!(p.max_rel_error < tol)) e.failing.push_back(p.name);
  return e;
}

inline Var weighted_total(Tape& t, Var x, const Tensor& w) { return sum(mul(x, t.constant(w))); }

struct FaultGuard {
  bool saved;
  explicit FaultGuard(bool on) : saved(fault::corrupt_tanh_grad) { fault::corrupt_tanh_grad = on; }
  ~FaultGuard() { fault::corrupt_tanh_grad = saved; }
};

inline void redraw(std::vector<ParamRef>& refs, Rng& rng, double scale) {
  if (scale <= 0.0) return;
  for (auto& r : refs) fill_uniform(*r.tensor, rng, -scale, scale);
}

inline std::vector<int> random_sentence(Rng& rng, std::size_t len, std::size_t vocab) {
  std::uniform_int_distribution<int> dist(kNumReserved, static_cast<int>(vocab) - 1);
  std::vector<int> s(len);
  for (auto& v : s) v = dist(rng);
  return s;
}

}  // namespace detail

// Gradient checks for each recurrent cell, the attention block and the full
// objective of every requested preset. Batches hold two sentences of unequal
// length so padding paths are exercised.
inline GradcheckReport run_gradcheck_suite(const GradcheckOptions& o) {
  detail::FaultGuard guard(o.corrupt_tanh_grad);
  GradcheckReport report;
  report.tolerance = o.tolerance;
  const std::size_t B = 2, d = o.dec, m = 2 * o.enc;

  // Cells: f = sum(w * cell(s, x)) over cell parameters and both inputs.
  for (const FutureCellKind kind : {FutureCellKind::Gru, FutureCellKind::GruO, FutureCellKind::GruI}) {
    Rng rng(o.seed);
    const std::size_t in = kind == FutureCellKind::GruI ? d : m;
    FutureCellParams cell;
    if (kind == FutureCellKind::GruO) cell = GruOParams::zeros(d, in);
    else cell = GruParams::zeros(d, in);
    Tensor s({B, d}), x({B, in}), w({B, d});
    std::vector<ParamRef> refs;
    std::visit([&](auto& c) { std::decay_t<decltype(c)>::visit(c, "cell", [&](const std::string& n, Tensor& t) {
                 refs.push_back({n, &t});
               }); },
               cell);
    refs.push_back({"cell.s", &s});
    refs.push_back({"cell.x", &x});
    std::visit([&](auto& c) { c.init(rng); }, cell);
    detail::redraw(refs, rng, o.point_scale);
    fill_uniform(s, rng, -1.0, 1.0);
    fill_uniform(x, rng, -1.0, 1.0);
    fill_uniform(w, rng, -1.0, 1.0);
    LossBuilder f = [&](Tape& t) {
      FutureCellVars v;
      if (auto* g = std::get_if<GruParams>(&cell)) v = bind_gru(t, *g);
      else v = bind_gru_o(t, std::get<GruOParams>(cell));
      return detail::weighted_total(t, future_step(kind, v, t.param(s), t.param(x)), w);
    };
    report.entries.push_back(
        detail::summarize("cells/" + to_string(kind), finite_difference_check(f, refs, o.h), o.tolerance));
  }

  // Attention with both Future- and Past-aware scoring.
  {
    ModelConfig cfg;
    cfg.src_vocab = cfg.tgt_vocab = o.vocab;
    cfg.emb = o.emb;
    cfg.enc = o.enc;
    cfg.dec = d;
    cfg.use_future = cfg.use_past = true;
    Rng rng(o.seed + 1);
    AttentionParams ap = AttentionParams::zeros(cfg);
    ap.init(rng);
    const std::size_t I = o.src_len;
    Tensor h({B * I, m}), s({B, d}), sF({B, d}), sP({B, d}), wc({B, m}), wa({B, I});
    std::vector<ParamRef> refs;
    AttentionParams::visit(ap, [&](const std::string& n, Tensor& t) { refs.push_back({n, &t}); });
    detail::redraw(refs, rng, o.point_scale);
    for (auto [n, t] : {std::pair{"attention.h", &h}, {"attention.s", &s}, {"attention.sF", &sF}, {"attention.sP", &sP}}) {
      fill_uniform(*t, rng, -1.0, 1.0);
      refs.push_back({n, t});
    }
    fill_uniform(wc, rng, -1.0, 1.0);
    fill_uniform(wa, rng, -1.0, 1.0);
    Mask mask(B * I, 1);
    for (std::size_t i = (I + 1) / 2; i < I; ++i) mask[I + i] = 0;  // second sentence is shorter
    LossBuilder f = [&](Tape& t) {
      const AttentionVars v = bind_attention(t, ap);
      const Var hv = t.param(h);
      const AttentionMemory mem{hv, linear(hv, v.U_a), mask, B, I};
      const auto r = attend(v, t.param(s), mem, t.param(sF), t.param(sP));
      return add(detail::weighted_total(t, r.context, wc), detail::weighted_total(t, r.alpha, wa));
    };
    report.entries.push_back(detail::summarize("attention", finite_difference_check(f, refs, o.h), o.tolerance));
  }

  // Full model per preset: encoder, decoder and, where enabled, the
  // subtraction/addition losses.
  Rng data_rng(o.seed + 2);
  const std::size_t short_src = std::max<std::size_t>(1, o.src_len / 2 + 1);
  const std::size_t short_tgt = std::max<std::size_t>(1, o.tgt_len / 2 + 1);
  std::vector<std::vector<int>> src = {detail::random_sentence(data_rng, o.src_len, o.vocab),
                                       detail::random_sentence(data_rng, short_src, o.vocab)};
  std::vector<std::vector<int>> tgt = {detail::random_sentence(data_rng, o.tgt_len - 1, o.vocab),
                                       detail::random_sentence(data_rng, short_tgt - 1, o.vocab)};
  for (auto& y : tgt) y.push_back(kEosId);
  const TokenBatch sb = TokenBatch::from(src), tb = TokenBatch::from(tgt);

  for (const auto& name : o.presets) {
    ModelConfig cfg;
    cfg.src_vocab = cfg.tgt_vocab = o.vocab;
    cfg.emb = o.emb;
    cfg.enc = o.enc;
    cfg.dec = d;
    cfg = apply_preset(cfg, name);
    Model model = Model::random(cfg, o.seed);
    auto refs = model.params.refs();
    Rng rng(o.seed + 3);
    detail::redraw(refs, rng, o.point_scale);
    LossBuilder f = [&](Tape& t) {
      const ModelVars v = bind_model(t, model.params);
      return objective(cfg, v, teacher_forced_pass(cfg, v, sb, tb)).total;
    };
    const std::string module = cfg.use_losses ? "objective/" : "decoder/";
    report.entries.push_back(detail::summarize(module + name, finite_difference_check(f, refs, o.h), o.tolerance));
  }
  return report;
}

}  // namespace PFNMT_PRECISION_NS
}  // namespace pfnmt
