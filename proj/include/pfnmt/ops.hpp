#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pfnmt/errors.hpp"
#include "pfnmt/tape.hpp"
#include "pfnmt/tensor.hpp"

// Differentiable primitives over Tape values. Every matrix product
// accumulates its inner index in ascending order starting from 0.0, which
// scalar reference code relies on for bitwise comparisons.

namespace pfnmt {
inline namespace PFNMT_PRECISION_NS {

namespace fault {
// Test harness hook: when set, tanh's backward rule is deliberately wrong.
inline bool corrupt_tanh_grad = false;
}  // namespace fault

namespace detail {

inline void require_same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ContractError("operands live on different tapes");
}

// c[m x n] += a[m x k] * b[k x n]
inline void gemm_nn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = a[i * k + p];
      const Real* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
inline void gemm_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  if (m >= 4) {
    std::vector<Real> bt(k * n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    gemm_nn(a, bt.data(), c, m, k, n);
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real acc = c[i * n + j];
      const Real* ai = a + i * k;
      const Real* bj = b + j * k;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[i * n + j] = acc;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
inline void gemm_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = a[i * k + p];
      if (aip == 0.0) continue;
      Real* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

inline Shape rowwise_shape(const Tensor& like, std::size_t rows, std::size_t cols) {
  if (like.rank() == 1) return {cols};
  return {rows, cols};
}

enum class Binary { Add, Sub, Mul };

inline Var binary(Binary kind, Var a, Var b) {
  require_same_tape(a, b);
  Tape& tape = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool a_scalar = av.size() == 1 && bv.size() != 1;
  const bool b_scalar = bv.size() == 1 && av.size() != 1;
  if (!a_scalar && !b_scalar && av.shape() != bv.shape()) {
    throw DimensionError("elementwise operands have incompatible shapes " + shape_str(av.shape()) +
                         " and " + shape_str(bv.shape()));
  }
  const Tensor& big = a_scalar ? bv : av;
  Tensor out(big.shape());
  const std::size_t n = out.size();
  auto A = [&](std::size_t i) { return a_scalar ? av[0] : av[i]; };
  auto B = [&](std::size_t i) { return b_scalar ? bv[0] : bv[i]; };
  switch (kind) {
    case Binary::Add:
      for (std::size_t i = 0; i < n; ++i) out[i] = A(i) + B(i);
      break;
    case Binary::Sub:
      for (std::size_t i = 0; i < n; ++i) out[i] = A(i) - B(i);
      break;
    case Binary::Mul:
      for (std::size_t i = 0; i < n; ++i) out[i] = A(i) * B(i);
      break;
  }
  const std::size_t ai = a.id, bi = b.id;
  return tape.record(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad_mut(self);
    const Tensor& x = t.value(Var{&t, ai});
    const Tensor& y = t.value(Var{&t, bi});
    if (t.requires_grad(Var{&t, ai})) {
      auto& ga = t.grad_mut(ai);
      for (std::size_t i = 0; i < n; ++i) {
        Real d = g[i];
        if (kind == Binary::Mul) d *= b_scalar ? y[0] : y[i];
        ga[a_scalar ? 0 : i] += d;
      }
    }
    if (t.requires_grad(Var{&t, bi})) {
      auto& gb = t.grad_mut(bi);
      for (std::size_t i = 0; i < n; ++i) {
        Real d = g[i];
        if (kind == Binary::Sub) d = -d;
        if (kind == Binary::Mul) d *= a_scalar ? x[0] : x[i];
        gb[b_scalar ? 0 : i] += d;
      }
    }
  });
}

}  // namespace detail

inline Var add(Var a, Var b) { return detail::binary(detail::Binary::Add, a, b); }
inline Var sub(Var a, Var b) { return detail::binary(detail::Binary::Sub, a, b); }
inline Var mul(Var a, Var b) { return detail::binary(detail::Binary::Mul, a, b); }

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// 1 - x, computed literally so that reference code can reproduce it.
inline Var one_minus(Var x) { return sub(x.tape->constant(Tensor::scalar(1.0)), x); }

inline Var scale(Var x, Real c) { return mul(x, x.tape->constant(Tensor::scalar(c))); }

inline Var tanh(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  const std::size_t xi = x.id;
  return x.tape->record(std::move(out), {x}, [xi](Tape& t, std::size_t self) {
    const Tensor& y = t.value(Var{&t, self});
    const auto& g = t.grad_mut(self);
    auto& gx = t.grad_mut(xi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Real local = fault::corrupt_tanh_grad ? 1.0 - y[i] : 1.0 - y[i] * y[i];
      gx[i] += g[i] * local;
    }
  });
}

inline Var sigmoid(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  const std::size_t xi = x.id;
  return x.tape->record(std::move(out), {x}, [xi](Tape& t, std::size_t self) {
    const Tensor& y = t.value(Var{&t, self});
    const auto& g = t.grad_mut(self);
    auto& gx = t.grad_mut(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

// a[m x k] * b[k x n]; a may be 1-D (one row), in which case the result is 1-D.
inline Var matmul(Var a, Var b) {
  detail::require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() > 2 || bv.rank() != 2 || av.cols() != bv.shape()[0]) {
    throw DimensionError("matmul: cannot multiply " + shape_str(av.shape()) + " by " +
                         shape_str(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out(detail::rowwise_shape(av, m, n));
  detail::gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad_mut(self);
    const Tensor& x = t.value(Var{&t, ai});
    const Tensor& y = t.value(Var{&t, bi});
    if (t.requires_grad(Var{&t, ai})) {
      // dA = G * B^T
      detail::gemm_nt(g.data(), y.data().data(), t.grad_mut(ai).data(), m, n, k);
    }
    if (t.requires_grad(Var{&t, bi})) {
      // dB = A^T * G
      detail::gemm_tn(x.data().data(), g.data(), t.grad_mut(bi).data(), m, k, n);
    }
  });
}

// a[m x k] * b[n x k]^T, the row-batched form of W x.
inline Var matmul_nt(Var a, Var b) {
  detail::require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() > 2 || bv.rank() != 2 || av.cols() != bv.cols()) {
    throw DimensionError("matmul: cannot multiply " + shape_str(av.shape()) + " by transpose of " +
                         shape_str(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.shape()[0];
  Tensor out(detail::rowwise_shape(av, m, n));
  detail::gemm_nt(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad_mut(self);
    const Tensor& x = t.value(Var{&t, ai});
    const Tensor& y = t.value(Var{&t, bi});
    if (t.requires_grad(Var{&t, ai})) {
      // dA = G * B
      detail::gemm_nn(g.data(), y.data().data(), t.grad_mut(ai).data(), m, n, k);
    }
    if (t.requires_grad(Var{&t, bi})) {
      // dB = G^T * A
      detail::gemm_tn(g.data(), x.data().data(), t.grad_mut(bi).data(), m, n, k);
    }
  });
}

// x[r x n] + b[n] broadcast over rows.
inline Var add_bias(Var x, Var b) {
  detail::require_same_tape(x, b);
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (bv.size() != xv.cols()) {
    throw DimensionError("bias of shape " + shape_str(bv.shape()) + " does not fit " +
                         shape_str(xv.shape()));
  }
  Tensor out(xv.shape());
  const std::size_t r = xv.rows(), n = xv.cols();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + bv[j];
  const std::size_t xi = x.id, bi = b.id;
  return x.tape->record(std::move(out), {x, b}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad_mut(self);
    if (t.requires_grad(Var{&t, xi})) {
      auto& gx = t.grad_mut(xi);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(Var{&t, bi})) {
      auto& gb = t.grad_mut(bi);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

// x W^T (+ b): one affine map applied to every row of x.
inline Var linear(Var x, Var w) { return matmul_nt(x, w); }
inline Var linear(Var x, Var w, Var b) { return add_bias(matmul_nt(x, w), b); }

// Row-wise softmax with optional mask (same length as x, 1 = visible).
// Masked entries come out exactly 0.
inline Var softmax(Var x, const Mask* mask = nullptr) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), n = xv.cols();
  if (mask && mask->size() != xv.size()) {
    throw DimensionError("softmax: mask length " + std::to_string(mask->size()) +
                         " does not match input " + shape_str(xv.shape()));
  }
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < r; ++i) {
    Real mx = -std::numeric_limits<Real>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && !(*mask)[i * n + j]) continue;
      any = true;
      mx = std::max(mx, xv[i * n + j]);
    }
    if (!any) throw InvalidMaskError("softmax: every position of row " + std::to_string(i) + " is masked");
    Real z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && !(*mask)[i * n + j]) continue;
      out[i * n + j] = std::exp(xv[i * n + j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  const std::size_t xi = x.id;
  return x.tape->record(std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const Tensor& y = t.value(Var{&t, self});
    const auto& g = t.grad_mut(self);
    auto& gx = t.grad_mut(xi);
    for (std::size_t i = 0; i < r; ++i) {
      Real dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

// Row-wise log softmax: x - max - log(sum exp(x - max)).
inline Var log_softmax(Var x) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), n = xv.cols();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < r; ++i) {
    Real mx = xv[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv[i * n + j]);
    Real z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(xv[i * n + j] - mx);
    const Real lz = std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] - mx - lz;
  }
  const std::size_t xi = x.id;
  return x.tape->record(std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const Tensor& y = t.value(Var{&t, self});
    const auto& g = t.grad_mut(self);
    auto& gx = t.grad_mut(xi);
    for (std::size_t i = 0; i < r; ++i) {
      Real gs = 0.0;
      for (std::size_t j = 0; j < n; ++j) gs += g[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i * n + j] - std::exp(y[i * n + j]) * gs;
    }
  });
}

// Concatenate along the last dimension; all parts share their row count.
inline Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat: nothing to concatenate");
  Tape& tape = *parts.front().tape;
  const std::size_t r = parts.front().value().rows();
  std::size_t width = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.tape != &tape) throw ContractError("concat: operands live on different tapes");
    if (p.value().rows() != r) {
      throw DimensionError("concat: row count mismatch " + shape_str(parts.front().shape()) + " vs " +
                           shape_str(p.shape()));
    }
    widths.push_back(p.value().cols());
    width += widths.back();
  }
  Tensor out(detail::rowwise_shape(parts.front().value(), r, width));
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * width + off + j] = pv[i * widths[k] + j];
    off += widths[k];
  }
  std::vector<std::size_t> ids;
  for (const auto& p : parts) ids.push_back(p.id);
  return tape.record(std::move(out), parts, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad_mut(self);
    std::size_t o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(Var{&t, ids[k]})) {
        auto& gp = t.grad_mut(ids[k]);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) gp[i * widths[k] + j] += g[i * width + o + j];
      }
      o += widths[k];
    }
  });
}

inline Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

// Rows of the embedding table E[V x e] for each id; pad_id rows are zero and
// receive no gradient.
inline Var embedding(Var table, std::span<const int> ids, int pad_id) {
  const Tensor& ev = table.value();
  if (ev.rank() != 2) throw DimensionError("embedding table must be 2-D, got " + shape_str(ev.shape()));
  const std::size_t vocab = ev.shape()[0], e = ev.cols();
  if (ids.empty()) throw ContractError("embedding: empty id list");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw VocabError("token id " + std::to_string(id) + " out of range for vocabulary of " +
                       std::to_string(vocab));
    }
  }
  std::vector<int> idv(ids.begin(), ids.end());
  Tensor out({idv.size(), e});
  for (std::size_t i = 0; i < idv.size(); ++i) {
    if (idv[i] == pad_id) continue;
    for (std::size_t j = 0; j < e; ++j) out[i * e + j] = ev[idv[i] * e + j];
  }
  const std::size_t ti = table.id;
  return table.tape->record(std::move(out), {table}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad_mut(self);
    auto& gt = t.grad_mut(ti);
    for (std::size_t i = 0; i < idv.size(); ++i) {
      if (idv[i] == pad_id) continue;
      for (std::size_t j = 0; j < e; ++j) gt[idv[i] * e + j] += g[i * e + j];
    }
  });
}

// Stack per-position rows: parts[i] is [B x n]; output row b*I + i holds
// parts[i] row b.
inline Var stack_positions(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("stack_positions: no positions");
  Tape& tape = *parts.front().tape;
  const std::size_t positions = parts.size();
  const std::size_t batch = parts.front().value().rows(), n = parts.front().value().cols();
  for (const auto& p : parts) {
    if (p.value().rows() != batch || p.value().cols() != n) {
      throw DimensionError("stack_positions: shape mismatch " + shape_str(p.shape()));
    }
  }
  Tensor out({batch * positions, n});
  for (std::size_t i = 0; i < positions; ++i) {
    const Tensor& pv = parts[i].value();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < n; ++j) out[(b * positions + i) * n + j] = pv[b * n + j];
  }
  std::vector<std::size_t> ids;
  for (const auto& p : parts) ids.push_back(p.id);
  return tape.record(std::move(out), parts, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad_mut(self);
    for (std::size_t i = 0; i < positions; ++i) {
      if (!t.requires_grad(Var{&t, ids[i]})) continue;
      auto& gp = t.grad_mut(ids[i]);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < n; ++j) gp[b * n + j] += g[(b * positions + i) * n + j];
    }
  });
}

// grouped[B*I x d] + per_group[B x d] (row b*I + i gets row b).
inline Var add_grouped(Var grouped, Var per_group, std::size_t group) {
  detail::require_same_tape(grouped, per_group);
  const Tensor& gv = grouped.value();
  const Tensor& pv = per_group.value();
  const std::size_t d = gv.cols();
  if (pv.cols() != d || pv.rows() * group != gv.rows()) {
    throw DimensionError("add_grouped: " + shape_str(gv.shape()) + " vs " + shape_str(pv.shape()));
  }
  Tensor out(gv.shape());
  const std::size_t rows = gv.rows();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = gv[r * d + j] + pv[(r / group) * d + j];
  const std::size_t gi = grouped.id, pi = per_group.id;
  return grouped.tape->record(std::move(out), {grouped, per_group}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad_mut(self);
    if (t.requires_grad(Var{&t, gi})) {
      auto& gg = t.grad_mut(gi);
      for (std::size_t i = 0; i < g.size(); ++i) gg[i] += g[i];
    }
    if (t.requires_grad(Var{&t, pi})) {
      auto& gp = t.grad_mut(pi);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) gp[(r / group) * d + j] += g[r * d + j];
    }
  });
}

// out[b] = sum_i weights[b, i] * rows[b*I + i], summed over i ascending.
inline Var weighted_sum(Var weights, Var rows) {
  detail::require_same_tape(weights, rows);
  const Tensor& wv = weights.value();
  const Tensor& hv = rows.value();
  const std::size_t batch = wv.rows(), positions = wv.cols(), n = hv.cols();
  if (hv.rows() != batch * positions) {
    throw DimensionError("weighted_sum: weights " + shape_str(wv.shape()) + " vs rows " +
                         shape_str(hv.shape()));
  }
  Tensor out(detail::rowwise_shape(wv, batch, n));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < positions; ++i) {
      const Real w = wv[b * positions + i];
      for (std::size_t j = 0; j < n; ++j) out[b * n + j] += w * hv[(b * positions + i) * n + j];
    }
  const std::size_t wi = weights.id, hi = rows.id;
  return weights.tape->record(std::move(out), {weights, rows}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad_mut(self);
    const Tensor& w = t.value(Var{&t, wi});
    const Tensor& h = t.value(Var{&t, hi});
    if (t.requires_grad(Var{&t, wi})) {
      auto& gw = t.grad_mut(wi);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < positions; ++i) {
          Real acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[b * n + j] * h[(b * positions + i) * n + j];
          gw[b * positions + i] += acc;
        }
    }
    if (t.requires_grad(Var{&t, hi})) {
      auto& gh = t.grad_mut(hi);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < positions; ++i) {
          const Real wbi = w[b * positions + i];
          for (std::size_t j = 0; j < n; ++j) gh[(b * positions + i) * n + j] += wbi * g[b * n + j];
        }
    }
  });
}

// Multiply row b of x by a constant factor[b].
inline Var scale_rows(Var x, std::span<const Real> factor) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), n = xv.cols();
  if (factor.size() != r) throw DimensionError("scale_rows: factor length does not match rows");
  std::vector<Real> f(factor.begin(), factor.end());
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] * f[i];
  const std::size_t xi = x.id;
  return x.tape->record(std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const auto& g = t.grad_mut(self);
    auto& gx = t.grad_mut(xi);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i * n + j] * f[i];
  });
}

// Row-wise blend new*keep + old*(1-keep) with keep in {0,1}: exact selection.
inline Var hold_rows(Var fresh, Var old, std::span<const Real> keep) {
  std::vector<Real> drop(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) drop[i] = 1.0 - keep[i];
  return add(scale_rows(fresh, keep), scale_rows(old, drop));
}

// sum_b weight[b] * -logp[b, ids[b]] as a scalar.
inline Var pick_nll(Var logp, std::span<const int> ids, std::span<const Real> weight) {
  const Tensor& lv = logp.value();
  const std::size_t r = lv.rows(), n = lv.cols();
  if (ids.size() != r || weight.size() != r) throw DimensionError("pick_nll: ids/weights do not match rows");
  std::vector<int> idv(ids.begin(), ids.end());
  std::vector<Real> w(weight.begin(), weight.end());
  Real total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (idv[i] < 0 || static_cast<std::size_t>(idv[i]) >= n) {
      throw VocabError("gold id " + std::to_string(idv[i]) + " out of range for " + std::to_string(n) +
                       " classes");
    }
    if (w[i] != 0.0) total += w[i] * -lv[i * n + idv[i]];
  }
  const std::size_t li = logp.id;
  return logp.tape->record(Tensor::scalar(total), {logp}, [=](Tape& t, std::size_t self) {
    const Real g = t.grad_mut(self)[0];
    auto& gl = t.grad_mut(li);
    for (std::size_t i = 0; i < r; ++i) gl[i * n + idv[i]] -= g * w[i];
  });
}

inline Var sum(Var x) {
  const Tensor& xv = x.value();
  Real s = 0.0;
  for (Real v : xv.data()) s += v;
  const std::size_t xi = x.id;
  return x.tape->record(Tensor::scalar(s), {x}, [xi](Tape& t, std::size_t self) {
    const Real g = t.grad_mut(self)[0];
    for (auto& v : t.grad_mut(xi)) v += g;
  });
}

inline Var reshape(Var x, Shape s) {
  Tensor out = x.value().reshaped(std::move(s));
  const std::size_t xi = x.id;
  return x.tape->record(std::move(out), {x}, [xi](Tape& t, std::size_t self) {
    const auto& g = t.grad_mut(self);
    auto& gx = t.grad_mut(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

}  // namespace PFNMT_PRECISION_NS
}  // namespace pfnmt
