#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pfnmt/errors.hpp"
#include "pfnmt/tape.hpp"
#include "pfnmt/tensor.hpp"

namespace pfnmt {
inline namespace PFNMT_PRECISION_NS {

struct ParamRef {
  std::string name;
  Tensor* tensor = nullptr;
};

// Builds a scalar loss on the given tape, binding whatever parameters it
// needs with Tape::param.
using LossBuilder = std::function<Var(Tape&)>;

struct ParamGradError {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::vector<ParamGradError> per_param;

  const ParamGradError* worst() const {
    auto it = std::max_element(per_param.begin(), per_param.end(), [](const auto& a, const auto& b) {
      return a.max_rel_error < b.max_rel_error;
    });
    return it == per_param.end() ? nullptr : &*it;
  }
};

inline Real relative_error(Real analytic, Real numeric) {
  return std::abs(analytic - numeric) / std::max(Real(1e-8), std::abs(analytic) + std::abs(numeric));
}

inline Real evaluate_loss(const LossBuilder& f) {
  Tape tape(/*record=*/false);
  const Var loss = f(tape);
  if (loss.value().size() != 1) throw ContractError("gradient check: loss is not scalar");
  return loss.value()[0];
}

// Central differences (f(θ+h) - f(θ-h)) / 2h for every entry of every
// parameter, compared against one backward pass.
inline GradCheckResult finite_difference_check(const LossBuilder& f, const std::vector<ParamRef>& params,
                                               Real h) {
  if (!(h > 0.0)) throw ContractError("gradient check: step size must be positive");

  const Real f0 = evaluate_loss(f);
  const Real f0_again = evaluate_loss(f);
  if (f0 != f0_again) {
    throw DeterminismError("gradient check: two evaluations at the same point differ (" +
                           std::to_string(static_cast<double>(f0)) + " vs " + std::to_string(static_cast<double>(f0_again)) + ")");
  }

  for (const auto& p : params) p.tensor->zero_grad();
  {
    Tape tape;
    const Var loss = f(tape);
    tape.backward(loss);
  }

  GradCheckResult result;
  for (const auto& p : params) {
    Tensor& t = *p.tensor;
    ParamGradError rep{p.name};
    const std::vector<Real> analytic = t.grad();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const Real saved = t[i];
      t[i] = saved + h;
      const Real fp = evaluate_loss(f);
      t[i] = saved - h;
      const Real fm = evaluate_loss(f);
      t[i] = saved;
      const Real numeric = (fp - fm) / (2 * h);
      const double err = static_cast<double>(relative_error(analytic[i], numeric));
      if (i == 0 || err > rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst_index = i;
        rep.analytic = static_cast<double>(analytic[i]);
        rep.numeric = static_cast<double>(numeric);
      }
    }
    result.max_rel_error = std::max(result.max_rel_error, rep.max_rel_error);
    result.per_param.push_back(std::move(rep));
  }
  return result;
}

}  // namespace PFNMT_PRECISION_NS
}  // namespace pfnmt
