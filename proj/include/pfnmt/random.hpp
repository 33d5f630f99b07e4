#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "pfnmt/tensor.hpp"

namespace pfnmt {
inline namespace PFNMT_PRECISION_NS {

using Rng = std::mt19937_64;

inline void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.data()) v = dist(rng);
}

// Random orthogonal matrix: Q factor of a Gaussian matrix, sign-corrected so
// the distribution is uniform over the orthogonal group.
inline void fill_orthogonal(Tensor& t, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(t.shape()[0]);
  if (t.rank() != 2 || t.shape()[1] != t.shape()[0]) {
    throw DimensionError("orthogonal init needs a square matrix, got " + shape_str(t.shape()));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) t(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = q(i, j);
}

}  // namespace PFNMT_PRECISION_NS
}  // namespace pfnmt
