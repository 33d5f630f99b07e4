#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "pfnmt/model_config.hpp"

// Settings and results of the gradient-check suite. These types do not
// depend on the scalar type, so builds of different precision share them.

namespace pfnmt {

struct GradcheckOptions {
  std::size_t emb = 8;
  std::size_t enc = 8;
  std::size_t dec = 8;
  std::size_t vocab = 11;
  std::size_t src_len = 5;
  std::size_t tgt_len = 4;  // decode steps, EOS included
  std::uint64_t seed = 1;
  double h = 1e-5;
  double tolerance = 1e-4;
  // Every parameter is redrawn from U(-point_scale, point_scale) before the
  // check; <= 0 keeps the model initializer's values.
  double point_scale = 1.0;
  std::vector<std::string> presets = preset_names();
  bool corrupt_tanh_grad = false;  // negative control
};

struct GradcheckEntry {
  std::string module;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::vector<std::string> failing;  // parameters at or above tolerance
};

struct GradcheckReport {
  double tolerance = 1e-4;
  std::vector<GradcheckEntry> entries;

  bool passed() const {
    for (const auto& e : entries)
      if (!(e.max_rel_error < tolerance)) return false;
    return !entries.empty();
  }
  double max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
};

}  // namespace pfnmt
