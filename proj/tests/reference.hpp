#pragma once

// Scalar reference implementation of the model, written independently of the
// tape: plain loops over std::vector<double>. Every dot product accumulates
// from 0.0 in ascending index order and every sum is grouped the way the
// model equations are written, so the baseline path can be compared bitwise.

#include <cmath>
#include <optional>
#include <variant>
#include <vector>

#include "pfnmt/model.hpp"

namespace ref {

using Vec = std::vector<double>;

struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

inline Mat mat(const pfnmt::Tensor& t) { return Mat{t.shape()[0], t.shape()[1], t.values()}; }
inline Vec vec(const pfnmt::Tensor& t) { return t.values(); }

inline Vec row(const pfnmt::Tensor& table, int id) {
  const std::size_t n = table.shape()[1];
  Vec r(n);
  for (std::size_t j = 0; j < n; ++j) r[j] = table.values()[static_cast<std::size_t>(id) * n + j];
  return r;
}

// Token embedding; the padding id embeds to zeros.
inline Vec embed(const pfnmt::Tensor& table, int id) {
  return id == pfnmt::kPadId ? Vec(table.shape()[1], 0.0) : row(table, id);
}

inline Vec mv(const Mat& w, const Vec& x) {
  Vec out(w.rows);
  for (std::size_t i = 0; i < w.rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols; ++j) acc += w(i, j) * x[j];
    out[i] = acc;
  }
  return out;
}

inline Vec cat(std::initializer_list<Vec> parts) {
  Vec out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec gru(const pfnmt::GruParams& p, const Vec& s, const Vec& x) {
  const std::size_t d = s.size();
  const Vec ur = mv(mat(p.U_r), s), wr = mv(mat(p.W_r), x);
  const Vec uu = mv(mat(p.U_u), s), wu = mv(mat(p.W_u), x);
  const Vec br = vec(p.b_r), bu = vec(p.b_u), b = vec(p.b);
  Vec r(d), u(d), rs(d);
  for (std::size_t i = 0; i < d; ++i) {
    r[i] = sigmoid(ur[i] + (wr[i] + br[i]));
    u[i] = sigmoid(uu[i] + (wu[i] + bu[i]));
    rs[i] = r[i] * s[i];
  }
  const Vec urs = mv(mat(p.U), rs), wx = mv(mat(p.W), x);
  Vec out(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double cand = std::tanh(urs[i] + (wx[i] + b[i]));
    out[i] = u[i] * s[i] + (1.0 - u[i]) * cand;
  }
  return out;
}

inline Vec gru_o(const pfnmt::GruOParams& p, const Vec& s, const Vec& c) {
  const Vec us = mv(mat(p.U_m), s), wc = mv(mat(p.W_m), c), bm = vec(p.b_m);
  Vec m(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) m[i] = std::tanh((us[i] - wc[i]) + bm[i]);
  return gru(p.gru, s, m);
}

inline Vec gru_i(const pfnmt::GruParams& p, const Vec& s, const Vec& c) {
  const std::size_t d = s.size();
  const Vec ur = mv(mat(p.U_r), s), wr = mv(mat(p.W_r), c);
  const Vec uu = mv(mat(p.U_u), s), wu = mv(mat(p.W_u), c);
  const Vec br = vec(p.b_r), bu = vec(p.b_u), b = vec(p.b);
  Vec r(d), u(d), rc(d);
  for (std::size_t i = 0; i < d; ++i) {
    r[i] = sigmoid(ur[i] + (wr[i] + br[i]));
    u[i] = sigmoid(uu[i] + (wu[i] + bu[i]));
    rc[i] = r[i] * c[i];
  }
  const Vec us = mv(mat(p.U), s), wrc = mv(mat(p.W), rc);
  Vec out(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double cand = std::tanh((us[i] - wrc[i]) + b[i]);
    out[i] = u[i] * s[i] + (1.0 - u[i]) * cand;
  }
  return out;
}

struct Encoded {
  std::vector<Vec> h;  // annotation per source position
  Vec fwd_last, bwd_first;
};

inline Encoded encode(const pfnmt::EncoderParams& p, const std::vector<int>& src) {
  const std::size_t I = src.size(), d = p.fwd.state_dim();
  std::vector<Vec> f(I), b(I);
  Vec h(d, 0.0);
  for (std::size_t i = 0; i < I; ++i) f[i] = h = gru(p.fwd, h, embed(p.src_embeddings, src[i]));
  h.assign(d, 0.0);
  for (std::size_t i = I; i-- > 0;) b[i] = h = gru(p.bwd, h, embed(p.src_embeddings, src[i]));
  Encoded e;
  for (std::size_t i = 0; i < I; ++i) e.h.push_back(cat({f[i], b[i]}));
  e.fwd_last = f[I - 1];
  e.bwd_first = b[0];
  return e;
}

inline Vec summary_state(const pfnmt::Tensor& W, const pfnmt::Tensor& bias, const Encoded& e) {
  const Vec z = mv(mat(W), cat({e.fwd_last, e.bwd_first}));
  const Vec b = vec(bias);
  Vec s(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) s[i] = std::tanh(z[i] + b[i]);
  return s;
}

struct Attended {
  Vec alpha, c;
};

inline Attended attend(const pfnmt::AttentionParams& p, const Vec& s, const std::vector<Vec>& h,
                       const std::optional<Vec>& sF, const std::optional<Vec>& sP) {
  Vec q = mv(mat(p.W_a), s);
  if (sF) {
    const Vec t = mv(mat(*p.V_f), *sF);
    for (std::size_t j = 0; j < q.size(); ++j) q[j] = q[j] + t[j];
  }
  if (sP) {
    const Vec t = mv(mat(*p.V_p), *sP);
    for (std::size_t j = 0; j < q.size(); ++j) q[j] = q[j] + t[j];
  }
  const Vec ba = vec(p.b_a), va = vec(p.v_a);
  for (std::size_t j = 0; j < q.size(); ++j) q[j] = q[j] + ba[j];

  const std::size_t I = h.size();
  Vec score(I);
  for (std::size_t i = 0; i < I; ++i) {
    const Vec proj = mv(mat(p.U_a), h[i]);
    double acc = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) acc += std::tanh(proj[j] + q[j]) * va[j];
    score[i] = acc;
  }
  double mx = -INFINITY;
  for (double v : score) mx = std::max(mx, v);
  Attended out;
  out.alpha.resize(I);
  double z = 0.0;
  for (std::size_t i = 0; i < I; ++i) {
    out.alpha[i] = std::exp(score[i] - mx);
    z += out.alpha[i];
  }
  for (auto& a : out.alpha) a /= z;
  out.c.assign(h[0].size(), 0.0);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < out.c.size(); ++j) out.c[j] += out.alpha[i] * h[i][j];
  return out;
}

inline Vec log_softmax(const Vec& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : x) z += std::exp(v - mx);
  const double lz = std::log(z);
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - mx - lz;
  return out;
}

struct State {
  Vec s;
  std::optional<Vec> sF, sP;
};

struct Step {
  State state;
  Vec alpha, c, logprobs;
};

inline State initial_state(const pfnmt::ModelConfig& cfg, const pfnmt::ModelParams& p, const Encoded& e) {
  State st;
  st.s = summary_state(p.encoder.W_s, p.encoder.b_s, e);
  if (cfg.use_future) st.sF = st.s;
  if (cfg.use_past) st.sP = Vec(cfg.dec, 0.0);
  return st;
}

inline Vec future(const pfnmt::FutureParams& f, const Vec& s, const Vec& c) {
  const Vec cin = f.ctx_proj ? mv(mat(*f.ctx_proj), c) : c;
  switch (f.kind) {
    case pfnmt::FutureCellKind::Gru: return gru(std::get<pfnmt::GruParams>(f.cell), s, cin);
    case pfnmt::FutureCellKind::GruO: return gru_o(std::get<pfnmt::GruOParams>(f.cell), s, cin);
    case pfnmt::FutureCellKind::GruI: return gru_i(std::get<pfnmt::GruParams>(f.cell), s, cin);
  }
  return {};
}

// One decoder step with the Future state fed at the previous timing unless
// the config asks for the current one.
inline Step decode_step(const pfnmt::ModelConfig& cfg, const pfnmt::ModelParams& p, const State& prev, int y_prev,
                        const std::vector<Vec>& h) {
  Step out;
  const Attended att = attend(p.attention, prev.s, h, prev.sF, prev.sP);
  out.alpha = att.alpha;
  out.c = att.c;
  if (cfg.use_future) out.state.sF = future(*p.future, *prev.sF, att.c);
  if (cfg.use_past) out.state.sP = gru(*p.past, *prev.sP, att.c);
  const Vec emb = embed(p.decoder.tgt_embeddings, y_prev);
  Vec in = cat({emb, att.c});
  if (cfg.use_future) {
    const Vec& f = cfg.feed_future_timing == pfnmt::FeedTiming::Current ? *out.state.sF : *prev.sF;
    in.insert(in.end(), f.begin(), f.end());
  }
  if (cfg.use_past) in.insert(in.end(), prev.sP->begin(), prev.sP->end());
  out.state.s = gru(p.decoder.cell, prev.s, in);

  const Vec z1 = mv(mat(p.decoder.W_o1), cat({emb, out.state.s, att.c}));
  const Vec b1 = vec(p.decoder.b_o1);
  Vec hidden(z1.size());
  for (std::size_t i = 0; i < z1.size(); ++i) hidden[i] = std::tanh(z1[i] + b1[i]);
  const Vec z2 = mv(mat(p.decoder.W_o2), hidden);
  const Vec b2 = vec(p.decoder.b_o2);
  Vec logits(z2.size());
  for (std::size_t i = 0; i < z2.size(); ++i) logits[i] = z2[i] + b2[i];
  out.logprobs = log_softmax(logits);
  return out;
}

// -log softmax_y(delta^T W E(y) + b)[gold]
inline double delta_loss(const pfnmt::Tensor& W, double b, const Vec& delta, int gold, const pfnmt::Tensor& E) {
  const Mat w = mat(W);
  const std::size_t V = E.shape()[0];
  Vec scores(V);
  for (std::size_t y = 0; y < V; ++y) {
    const Vec ey = row(E, static_cast<int>(y));
    double acc = 0.0;
    for (std::size_t i = 0; i < w.rows; ++i)
      for (std::size_t j = 0; j < w.cols; ++j) acc += delta[i] * w(i, j) * ey[j];
    scores[y] = acc + b;
  }
  return -log_softmax(scores)[static_cast<std::size_t>(gold)];
}

struct PassResult {
  std::vector<Step> steps;
  std::vector<double> nll;
  double future_loss = 0.0, past_loss = 0.0;
  State initial;
};

// Teacher-forced pass over one pair; tgt ends with EOS.
inline PassResult teacher_forced(const pfnmt::ModelConfig& cfg, const pfnmt::ModelParams& p,
                                 const std::vector<int>& src, const std::vector<int>& tgt) {
  PassResult r;
  const Encoded e = encode(p.encoder, src);
  r.initial = initial_state(cfg, p, e);
  State st = r.initial;
  int y_prev = pfnmt::kBosId;
  for (int y : tgt) {
    Step step = decode_step(cfg, p, st, y_prev, e.h);
    r.nll.push_back(-step.logprobs[static_cast<std::size_t>(y)]);
    if (cfg.future_loss_on()) {
      Vec dF(cfg.dec);
      for (std::size_t i = 0; i < cfg.dec; ++i) dF[i] = (*st.sF)[i] - (*step.state.sF)[i];
      r.future_loss += delta_loss(*p.aux.W_F, p.aux.b_F->values()[0], dF, y, p.decoder.tgt_embeddings);
    }
    if (cfg.past_loss_on()) {
      Vec dP(cfg.dec);
      for (std::size_t i = 0; i < cfg.dec; ++i) dP[i] = (*step.state.sP)[i] - (*st.sP)[i];
      r.past_loss += delta_loss(*p.aux.W_P, p.aux.b_P->values()[0], dP, y, p.decoder.tgt_embeddings);
    }
    st = step.state;
    r.steps.push_back(std::move(step));
    y_prev = y;
  }
  return r;
}

}  // namespace ref
