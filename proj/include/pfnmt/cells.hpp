#pragma once

#include <string>
#include <variant>

#include "pfnmt/errors.hpp"
#include "pfnmt/model_config.hpp"
#include "pfnmt/ops.hpp"
#include "pfnmt/random.hpp"
#include "pfnmt/tape.hpp"
#include "pfnmt/tensor.hpp"

// Recurrent cell updates. States and inputs are row-batched: s is [B x d],
// x is [B x m]; a 1-D vector is a batch of one.

namespace pfnmt {
inline namespace PFNMT_PRECISION_NS {

struct GruParams {
  Tensor U, W, U_r, W_r, U_u, W_u;
  Tensor b, b_r, b_u;

  static GruParams zeros(std::size_t state, std::size_t input) {
    GruParams p;
    p.U = p.U_r = p.U_u = Tensor({state, state});
    p.W = p.W_r = p.W_u = Tensor({state, input});
    p.b = p.b_r = p.b_u = Tensor({state});
    return p;
  }

  std::size_t state_dim() const { return U.shape()[0]; }
  std::size_t input_dim() const { return W.shape()[1]; }

  // Orthogonal recurrent matrices, small uniform input matrices, zero biases.
  void init(Rng& rng) {
    for (Tensor* t : {&U, &U_r, &U_u}) fill_orthogonal(*t, rng);
    for (Tensor* t : {&W, &W_r, &W_u}) fill_uniform(*t, rng, -0.08, 0.08);
  }

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + ".U", self.U);
    f(prefix + ".W", self.W);
    f(prefix + ".U_r", self.U_r);
    f(prefix + ".W_r", self.W_r);
    f(prefix + ".U_u", self.U_u);
    f(prefix + ".W_u", self.W_u);
    f(prefix + ".b", self.b);
    f(prefix + ".b_r", self.b_r);
    f(prefix + ".b_u", self.b_u);
  }
};

struct GruOParams {
  GruParams gru;  // input dim == state dim: it consumes M(s, c)
  Tensor U_m, W_m, b_m;

  static GruOParams zeros(std::size_t state, std::size_t input) {
    GruOParams p;
    p.gru = GruParams::zeros(state, state);
    p.U_m = Tensor({state, state});
    p.W_m = Tensor({state, input});
    p.b_m = Tensor({state});
    return p;
  }

  std::size_t state_dim() const { return gru.state_dim(); }
  std::size_t input_dim() const { return W_m.shape()[1]; }

  void init(Rng& rng) {
    gru.init(rng);
    fill_orthogonal(U_m, rng);
    fill_uniform(W_m, rng, -0.08, 0.08);
  }

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    GruParams::visit(self.gru, prefix, f);
    f(prefix + ".U_m", self.U_m);
    f(prefix + ".W_m", self.W_m);
    f(prefix + ".b_m", self.b_m);
  }
};

struct GruVars {
  Var U, W, U_r, W_r, U_u, W_u, b, b_r, b_u;
  std::size_t state = 0, input = 0;
};

struct GruOVars {
  GruVars gru;
  Var U_m, W_m, b_m;
};

// P may be const (read-only binding) or mutable (gradients flow back).
template <class P>
GruVars bind_gru(Tape& t, P& p) {
  return GruVars{t.param(p.U),   t.param(p.W),   t.param(p.U_r), t.param(p.W_r), t.param(p.U_u),
                 t.param(p.W_u), t.param(p.b),   t.param(p.b_r), t.param(p.b_u), p.state_dim(),
                 p.input_dim()};
}

template <class P>
GruOVars bind_gru_o(Tape& t, P& p) {
  return GruOVars{bind_gru(t, p.gru), t.param(p.U_m), t.param(p.W_m), t.param(p.b_m)};
}

namespace detail {

inline void check_cell_shapes(const char* cell, std::size_t d, std::size_t m, Var s, Var x) {
  const Tensor& sv = s.value();
  const Tensor& xv = x.value();
  if (sv.cols() != d || xv.cols() != m || sv.rows() != xv.rows()) {
    throw DimensionError(std::string(cell) + ": expected state [B x " + std::to_string(d) + "] and input [B x " +
                         std::to_string(m) + "], got " + shape_str(sv.shape()) + " and " +
                         shape_str(xv.shape()));
  }
}

}  // namespace detail

// r = σ(U_r s + W_r x + b_r), u = σ(U_u s + W_u x + b_u),
// s~ = tanh(U (r·s) + W x + b), s' = u·s + (1-u)·s~.
inline Var gru_step(const GruVars& p, Var s, Var x) {
  detail::check_cell_shapes("gru_step", p.state, p.input, s, x);
  const Var r = sigmoid(add(linear(s, p.U_r), linear(x, p.W_r, p.b_r)));
  const Var u = sigmoid(add(linear(s, p.U_u), linear(x, p.W_u, p.b_u)));
  const Var cand = tanh(add(linear(mul(r, s), p.U), linear(x, p.W, p.b)));
  return add(mul(u, s), mul(one_minus(u), cand));
}

// Outside minus: M = tanh(U_m s - W_m c + b_m) is fed to a GRU in place of c.
inline Var gru_o_step(const GruOVars& p, Var s, Var c) {
  detail::check_cell_shapes("gru_o_step", p.gru.state, p.W_m.value().shape()[1], s, c);
  const Var m = tanh(add_bias(sub(linear(s, p.U_m), linear(c, p.W_m)), p.b_m));
  return gru_step(p.gru, s, m);
}

// Inside minus: the reset gate scales the input, which is subtracted inside
// the candidate: s~ = tanh(U s - W (r·c) + b).
inline Var gru_i_step(const GruVars& p, Var s, Var c) {
  if (p.input != p.state) {
    throw DimensionError("gru_i_step: input dim " + std::to_string(p.input) + " must equal state dim " +
                         std::to_string(p.state));
  }
  detail::check_cell_shapes("gru_i_step", p.state, p.input, s, c);
  const Var r = sigmoid(add(linear(s, p.U_r), linear(c, p.W_r, p.b_r)));
  const Var u = sigmoid(add(linear(s, p.U_u), linear(c, p.W_u, p.b_u)));
  const Var cand = tanh(add_bias(sub(linear(s, p.U), linear(mul(r, c), p.W)), p.b));
  return add(mul(u, s), mul(one_minus(u), cand));
}

using FutureCellVars = std::variant<GruVars, GruOVars>;

inline Var future_step(FutureCellKind kind, const FutureCellVars& p, Var s, Var c) {
  switch (kind) {
    case FutureCellKind::Gru:
      if (auto* g = std::get_if<GruVars>(&p)) return gru_step(*g, s, c);
      break;
    case FutureCellKind::GruO:
      if (auto* g = std::get_if<GruOVars>(&p)) return gru_o_step(*g, s, c);
      break;
    case FutureCellKind::GruI:
      if (auto* g = std::get_if<GruVars>(&p)) return gru_i_step(*g, s, c);
      break;
  }
  throw ConfigError("future_step: parameters do not match cell kind " + to_string(kind));
}

// The Past layer accumulates with a plain GRU; callers start it from zero.
inline Var past_step(const GruVars& p, Var s, Var c) { return gru_step(p, s, c); }

// Value-level conveniences over a non-recording tape.

inline Tensor gru_step(const GruParams& p, const Tensor& s, const Tensor& x) {
  Tape t(false);
  return gru_step(bind_gru(t, p), t.constant(s), t.constant(x)).value();
}

inline Tensor gru_o_step(const GruOParams& p, const Tensor& s, const Tensor& c) {
  Tape t(false);
  return gru_o_step(bind_gru_o(t, p), t.constant(s), t.constant(c)).value();
}

inline Tensor gru_i_step(const GruParams& p, const Tensor& s, const Tensor& c) {
  Tape t(false);
  return gru_i_step(bind_gru(t, p), t.constant(s), t.constant(c)).value();
}

inline Tensor past_step(const GruParams& p, const Tensor& s, const Tensor& c) { return gru_step(p, s, c); }

using FutureCellParams = std::variant<GruParams, GruOParams>;

inline Tensor future_step(FutureCellKind kind, const FutureCellParams& p, const Tensor& s, const Tensor& c) {
  Tape t(false);
  FutureCellVars vars = std::visit(
      [&](const auto& q) -> FutureCellVars {
        if constexpr (std::is_same_v<std::decay_t<decltype(q)>, GruParams>) return bind_gru(t, q);
        else return bind_gru_o(t, q);
      },
      p);
  return future_step(kind, vars, t.constant(s), t.constant(c)).value();
}

}  // namespace PFNMT_PRECISION_NS
}  // namespace pfnmt
