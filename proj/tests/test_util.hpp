#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pfnmt/model.hpp"

namespace testutil {

inline void fill(pfnmt::Tensor& t, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data()) v = d(rng);
}

inline pfnmt::Tensor random_tensor(pfnmt::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  pfnmt::Tensor t(std::move(shape));
  fill(t, rng, lo, hi);
  return t;
}

inline pfnmt::GruParams random_gru(std::size_t d, std::size_t m, std::mt19937_64& rng, double scale = 1.0) {
  auto p = pfnmt::GruParams::zeros(d, m);
  pfnmt::GruParams::visit(p, "g", [&](const std::string&, pfnmt::Tensor& t) { fill(t, rng, -scale, scale); });
  return p;
}

// Every entry redrawn from U(-scale, scale), biases included.
inline void randomize(pfnmt::ModelParams& p, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  p.visit([&](const std::string&, pfnmt::Tensor& t) { fill(t, rng, -scale, scale); });
}

inline pfnmt::ModelConfig small_config(const std::string& preset, std::size_t dims = 4, std::size_t vocab = 7) {
  pfnmt::ModelConfig c;
  c.src_vocab = c.tgt_vocab = vocab;
  c.emb = c.enc = c.dec = dims;
  return pfnmt::apply_preset(c, preset);
}

inline std::vector<int> random_sentence(std::mt19937_64& rng, std::size_t len, std::size_t vocab) {
  std::uniform_int_distribution<int> d(pfnmt::kNumReserved, static_cast<int>(vocab) - 1);
  std::vector<int> s(len);
  for (auto& v : s) v = d(rng);
  return s;
}

inline std::vector<int> with_eos(std::vector<int> s) {
  s.push_back(pfnmt::kEosId);
  return s;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("pfnmt-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
