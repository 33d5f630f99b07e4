#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pfnmt/data.hpp"
#include "pfnmt/errors.hpp"

namespace pfnmt {

namespace detail {

inline std::vector<std::string> bleu_tokens(const std::string& line, bool case_sensitive) {
  auto toks = split_tokens(line);
  if (!case_sensitive) {
    for (auto& t : toks)
      std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  }
  return toks;
}

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& toks,
                                                                    std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[{toks.begin() + i, toks.begin() + i + n}];
  return out;
}

}  // namespace detail

struct BleuStats {
  std::vector<std::size_t> matched;  // clipped n-gram matches, n = 1..max_n
  std::vector<std::size_t> total;    // hypothesis n-grams
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  double precision(std::size_t n) const { return total[n - 1] ? double(matched[n - 1]) / double(total[n - 1]) : 0.0; }
  double brevity_penalty() const {
    if (hyp_len == 0) return 0.0;
    return hyp_len < ref_len ? std::exp(1.0 - double(ref_len) / double(hyp_len)) : 1.0;
  }
};

inline BleuStats bleu_stats(std::span<const std::string> hyps, std::span<const std::string> refs, std::size_t max_n = 4,
                            bool case_sensitive = true) {
  if (hyps.size() != refs.size()) {
    throw DataError("corpus_bleu: " + std::to_string(hyps.size()) + " hypotheses vs " + std::to_string(refs.size()) +
                    " references");
  }
  if (hyps.empty()) throw DataError("corpus_bleu: empty corpus");
  if (max_n == 0) throw ConfigError("corpus_bleu: max_n must be positive");
  BleuStats s{std::vector<std::size_t>(max_n), std::vector<std::size_t>(max_n), 0, 0};
  for (std::size_t k = 0; k < hyps.size(); ++k) {
    const auto h = detail::bleu_tokens(hyps[k], case_sensitive);
    const auto r = detail::bleu_tokens(refs[k], case_sensitive);
    s.hyp_len += h.size();
    s.ref_len += r.size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto hc = detail::ngram_counts(h, n);
      const auto rc = detail::ngram_counts(r, n);
      for (const auto& [g, c] : hc) {
        auto it = rc.find(g);
        if (it != rc.end()) s.matched[n - 1] += std::min(c, it->second);
        s.total[n - 1] += c;
      }
    }
  }
  return s;
}

// Unsmoothed corpus BLEU in percent: BP * exp(mean_n log p_n); any zero
// precision gives 0.
inline double corpus_bleu(std::span<const std::string> hyps, std::span<const std::string> refs, std::size_t max_n = 4,
                          bool case_sensitive = true) {
  const BleuStats s = bleu_stats(hyps, refs, max_n, case_sensitive);
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const double p = s.precision(n);
    if (p == 0.0) return 0.0;
    log_sum += std::log(p);
  }
  return 100.0 * s.brevity_penalty() * std::exp(log_sum / double(max_n));
}

// Corpus-level AER in percent: counts are summed over all sentences before
// the ratio. An empty prediction against an empty sure set scores 0.
inline double aer(std::span<const LinkSet> pred, const AlignmentGold& gold) {
  if (pred.size() != gold.sure.size() || gold.sure.size() != gold.possible.size()) {
    throw DataError("aer: " + std::to_string(pred.size()) + " predicted vs " + std::to_string(gold.sure.size()) +
                    " gold sentences");
  }
  std::size_t a_s = 0, a_p = 0, a = 0, s = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    for (const auto& l : pred[k]) {
      a_s += gold.sure[k].count(l);
      a_p += gold.possible[k].count(l);
    }
    a += pred[k].size();
    s += gold.sure[k].size();
  }
  if (a + s == 0) return 0.0;
  return 100.0 * (1.0 - double(a_s + a_p) / double(a + s));
}

enum class CoverageTask { Copy, PermutedCopy };

inline CoverageTask coverage_task_from_string(const std::string& s) {
  if (s == "copy") return CoverageTask::Copy;
  if (s == "permuted-copy") return CoverageTask::PermutedCopy;
  throw ConfigError("coverage diagnostics need a task where every source token appears once in the output "
                    "(copy or permuted-copy), got '" + s + "'");
}

struct CoverageRatios {
  double over = 0.0;
  double under = 0.0;
};

// Fraction of source tokens whose type occurs more (over) or fewer (under)
// times in the hypothesis than in the source. For permuted copies pass the
// reference output as src.
inline CoverageRatios coverage_diagnostics(std::span<const int> src, std::span<const int> hyp, CoverageTask task) {
  (void)task;  // both supported tasks compare token multisets
  if (src.empty()) return {};
  std::unordered_map<int, long> src_count, hyp_count;
  for (int t : src) ++src_count[t];
  for (int t : hyp) ++hyp_count[t];
  std::size_t over = 0, under = 0;
  for (int t : src) {
    const long h = hyp_count.count(t) ? hyp_count.at(t) : 0;
    over += h > src_count.at(t);
    under += h < src_count.at(t);
  }
  return {double(over) / double(src.size()), double(under) / double(src.size())};
}

// Token-weighted corpus average.
inline CoverageRatios coverage_diagnostics(std::span<const std::vector<int>> srcs,
                                           std::span<const std::vector<int>> hyps, CoverageTask task) {
  if (srcs.size() != hyps.size()) throw DataError("coverage_diagnostics: sentence counts differ");
  double over = 0.0, under = 0.0;
  std::size_t tokens = 0;
  for (std::size_t k = 0; k < srcs.size(); ++k) {
    const auto r = coverage_diagnostics(srcs[k], hyps[k], task);
    over += r.over * double(srcs[k].size());
    under += r.under * double(srcs[k].size());
    tokens += srcs[k].size();
  }
  if (tokens == 0) return {};
  return {over / double(tokens), under / double(tokens)};
}

}  // namespace pfnmt
