#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pfnmt/errors.hpp"
#include "pfnmt/gradcheck.hpp"
#include "pfnmt/tensor.hpp"

namespace pfnmt {
inline namespace PFNMT_PRECISION_NS {

// Adam moments per parameter, keyed by the parameter order of the model's
// visit sequence (names are kept to validate that order).
struct AdamState {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::string> names;
  std::vector<std::vector<Real>> m, v;

  static AdamState for_params(const std::vector<ParamRef>& params, double lr) {
    AdamState s;
    s.lr = lr;
    for (const auto& p : params) {
      s.names.push_back(p.name);
      s.m.emplace_back(p.tensor->size(), 0.0);
      s.v.emplace_back(p.tensor->size(), 0.0);
    }
    return s;
  }
};

// Bias-corrected Adam update using the gradients stored on each tensor.
inline void adam_step(AdamState& s, const std::vector<ParamRef>& params) {
  if (s.names.empty() && s.t == 0) s = AdamState::for_params(params, s.lr);
  if (params.size() != s.names.size()) throw ContractError("adam_step: optimizer state tracks a different parameter set");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor& p = *params[k].tensor;
    if (params[k].name != s.names[k] || s.m[k].size() != p.size()) {
      throw ContractError("adam_step: optimizer state does not match parameter " + params[k].name);
    }
    if (p.grad().size() != p.size()) throw ContractError("adam_step: missing gradient for " + params[k].name);
  }
  ++s.t;
  const Real b1 = s.beta1, b2 = s.beta2;
  const Real c1 = 1 - std::pow(b1, Real(s.t)), c2 = 1 - std::pow(b2, Real(s.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k].tensor;
    const auto& g = p.grad();
    auto& m = s.m[k];
    auto& v = s.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const Real mhat = m[i] / c1, vhat = v[i] / c2;
      p[i] -= Real(s.lr) * mhat / (std::sqrt(vhat) + Real(s.eps));
    }
  }
}

inline double global_grad_norm(const std::vector<ParamRef>& params) {
  Real sq = 0;
  for (const auto& p : params)
    for (Real g : p.tensor->grad()) sq += g * g;
  return static_cast<double>(std::sqrt(sq));
}

// Rescales all gradients by min(1, max_norm / ||g||); returns the norm
// before clipping.
inline double clip_grad_norm(const std::vector<ParamRef>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const Real f = Real(max_norm) / Real(norm);
    for (const auto& p : params)
      for (Real& g : p.tensor->grad()) g *= f;
  }
  return norm;
}

}  // namespace PFNMT_PRECISION_NS
}  // namespace pfnmt
