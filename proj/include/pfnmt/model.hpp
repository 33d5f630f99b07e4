#pragma once

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pfnmt/attention.hpp"
#include "pfnmt/cells.hpp"
#include "pfnmt/encoder.hpp"
#include "pfnmt/gradcheck.hpp"
#include "pfnmt/model_config.hpp"
#include "pfnmt/objective.hpp"

namespace pfnmt {
inline namespace PFNMT_PRECISION_NS {

struct DecoderParams {
  Tensor tgt_embeddings;  // [V_tgt x e]
  GruParams cell;         // state d_dec, input cfg.decoder_input_dim()
  Tensor W_o1, b_o1;      // [d_o x (e + d_dec + 2 d_enc)]
  Tensor W_o2, b_o2;      // [V_tgt x d_o]

  static DecoderParams zeros(const ModelConfig& cfg) {
    DecoderParams p;
    p.tgt_embeddings = Tensor({cfg.tgt_vocab, cfg.emb});
    p.cell = GruParams::zeros(cfg.dec, cfg.decoder_input_dim());
    p.W_o1 = Tensor({cfg.readout_dim(), cfg.emb + cfg.dec + cfg.annotation_dim()});
    p.b_o1 = Tensor({cfg.readout_dim()});
    p.W_o2 = Tensor({cfg.tgt_vocab, cfg.readout_dim()});
    p.b_o2 = Tensor({cfg.tgt_vocab});
    return p;
  }

  void init(Rng& rng) {
    fill_uniform(tgt_embeddings, rng, -0.08, 0.08);
    cell.init(rng);
    fill_uniform(W_o1, rng, -0.08, 0.08);
    fill_uniform(W_o2, rng, -0.08, 0.08);
  }

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f("decoder.tgt_embeddings", self.tgt_embeddings);
    GruParams::visit(self.cell, "decoder.cell", f);
    f("decoder.W_o1", self.W_o1);
    f("decoder.b_o1", self.b_o1);
    f("decoder.W_o2", self.W_o2);
    f("decoder.b_o2", self.b_o2);
  }
};

// Future layer: one of the three cell variants. GRU-i multiplies the reset
// gate into the context, so a context projection to d_dec is added when the
// annotation width differs from the state width.
struct FutureParams {
  FutureCellKind kind = FutureCellKind::GruI;
  FutureCellParams cell;
  std::optional<Tensor> ctx_proj;  // [d_dec x 2 d_enc]

  static FutureParams zeros(const ModelConfig& cfg) {
    FutureParams p;
    p.kind = cfg.future_kind;
    const std::size_t d = cfg.dec, m = cfg.annotation_dim();
    switch (cfg.future_kind) {
      case FutureCellKind::Gru: p.cell = GruParams::zeros(d, m); break;
      case FutureCellKind::GruO: p.cell = GruOParams::zeros(d, m); break;
      case FutureCellKind::GruI:
        p.cell = GruParams::zeros(d, d);
        if (m != d) p.ctx_proj = Tensor({d, m});
        break;
    }
    return p;
  }

  void init(Rng& rng) {
    std::visit([&](auto& c) { c.init(rng); }, cell);
    if (ctx_proj) fill_uniform(*ctx_proj, rng, -0.08, 0.08);
  }

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    std::visit([&](auto& c) { std::decay_t<decltype(c)>::visit(c, "future", f); }, self.cell);
    if (self.ctx_proj) f("future.ctx_proj", *self.ctx_proj);
  }
};

struct FutureVars {
  FutureCellKind kind;
  FutureCellVars cell;
  std::optional<Var> ctx_proj;
};

struct ModelParams {
  EncoderParams encoder;
  AttentionParams attention;
  DecoderParams decoder;
  std::optional<FutureParams> future;
  std::optional<GruParams> past;
  AuxLossParams aux;

  static ModelParams zeros(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p{EncoderParams::zeros(cfg), AttentionParams::zeros(cfg), DecoderParams::zeros(cfg),
                  std::nullopt, std::nullopt, AuxLossParams::zeros(cfg)};
    if (cfg.use_future) p.future = FutureParams::zeros(cfg);
    if (cfg.use_past) p.past = GruParams::zeros(cfg.dec, cfg.annotation_dim());
    return p;
  }

  // Fresh random parameters. Components are initialized in a fixed order so a
  // given seed always yields the same model.
  static ModelParams random(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p = zeros(cfg);
    Rng rng(seed);
    p.encoder.init(rng);
    p.attention.init(rng);
    p.decoder.init(rng);
    if (p.future) p.future->init(rng);
    if (p.past) p.past->init(rng);
    p.aux.init(rng);
    return p;
  }

  // Visits every parameter tensor with its stable checkpoint name.
  template <class F>
  void visit(F&& f) { visit_impl(*this, f); }
  template <class F>
  void visit(F&& f) const { visit_impl(*this, f); }

  std::vector<ParamRef> refs() {
    std::vector<ParamRef> out;
    visit([&](const std::string& name, Tensor& t) { out.push_back({name, &t}); });
    return out;
  }

  std::size_t count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
  }

  void zero_grad() {
    visit([](const std::string&, Tensor& t) { t.zero_grad(); });
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    EncoderParams::visit(self.encoder, f);
    AttentionParams::visit(self.attention, f);
    DecoderParams::visit(self.decoder, f);
    if (self.future) FutureParams::visit(*self.future, f);
    if (self.past) GruParams::visit(*self.past, "past", f);
    AuxLossParams::visit(self.aux, f);
  }
};

struct ModelVars {
  EncoderVars encoder;
  AttentionVars attention;
  Var tgt_embeddings;
  GruVars dec_cell;
  Var W_o1, b_o1, W_o2, b_o2;
  std::optional<FutureVars> future;
  std::optional<GruVars> past;
  AuxLossVars aux;
};

// Binds every parameter onto the tape. With a const ModelParams the binding
// is read-only (no gradients).
template <class P>
ModelVars bind_model(Tape& t, P& p) {
  ModelVars v{bind_encoder(t, p.encoder),
              bind_attention(t, p.attention),
              t.param(p.decoder.tgt_embeddings),
              bind_gru(t, p.decoder.cell),
              t.param(p.decoder.W_o1),
              t.param(p.decoder.b_o1),
              t.param(p.decoder.W_o2),
              t.param(p.decoder.b_o2),
              std::nullopt,
              std::nullopt,
              bind_aux(t, p.aux)};
  if (p.future) {
    FutureVars fv{p.future->kind, {}, std::nullopt};
    if (auto* g = std::get_if<GruParams>(&p.future->cell)) {
      fv.cell = bind_gru(t, *g);
    } else {
      fv.cell = bind_gru_o(t, std::get<GruOParams>(p.future->cell));
    }
    if (p.future->ctx_proj) fv.ctx_proj = t.param(*p.future->ctx_proj);
    v.future = fv;
  }
  if (p.past) v.past = bind_gru(t, *p.past);
  return v;
}

struct Model {
  ModelConfig config;
  ModelParams params;

  static Model random(const ModelConfig& cfg, std::uint64_t seed) { return {cfg, ModelParams::random(cfg, seed)}; }
  static Model zeros(const ModelConfig& cfg) { return {cfg, ModelParams::zeros(cfg)}; }
};

}  // namespace PFNMT_PRECISION_NS
}  // namespace pfnmt
