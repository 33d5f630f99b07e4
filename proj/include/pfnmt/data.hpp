#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pfnmt/errors.hpp"
#include "pfnmt/model_config.hpp"

namespace pfnmt {

inline std::vector<std::string> split_tokens(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream is{std::string(line)};
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline std::string join_tokens(std::span<const std::string> toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline void write_lines(const std::string& path, std::span<const std::string> lines) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& l : lines) out << l << '\n';
}

// Token <-> id map. Ids 0..3 are <pad>, <unk>, <s>, </s>.
class Vocabulary {
 public:
  static constexpr std::string_view kReserved[kNumReserved] = {"<pad>", "<unk>", "<s>", "</s>"};

  Vocabulary() {
    for (auto r : kReserved) add(std::string(r));
  }

  // Frequency-ranked, ties broken lexicographically, truncated to max_size
  // entries including the reserved ones.
  static Vocabulary build(std::span<const std::string> lines, std::size_t max_size) {
    std::map<std::string, std::size_t> freq;
    for (const auto& line : lines)
      for (auto& tok : split_tokens(line)) ++freq[tok];
    for (auto r : kReserved) freq.erase(std::string(r));
    if (freq.empty()) throw DataError("build_vocab: corpus has no tokens");
    if (max_size <= static_cast<std::size_t>(kNumReserved)) {
      throw ConfigError("build_vocab: max_size must exceed the 4 reserved tokens");
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (const auto& [tok, n] : ranked) {
      if (v.size() >= max_size) break;
      v.add(tok);
    }
    return v;
  }

  static Vocabulary from_tokens(std::span<const std::string> tokens) {
    if (tokens.size() < static_cast<std::size_t>(kNumReserved)) throw DataError("vocabulary file is missing reserved tokens");
    for (int i = 0; i < kNumReserved; ++i) {
      if (tokens[i] != kReserved[i]) {
        throw DataError("vocabulary line " + std::to_string(i + 1) + " must be " + std::string(kReserved[i]));
      }
    }
    Vocabulary v;
    for (std::size_t i = kNumReserved; i < tokens.size(); ++i) {
      if (v.index_.count(tokens[i])) throw DataError("duplicate vocabulary token '" + tokens[i] + "'");
      v.add(tokens[i]);
    }
    return v;
  }

  static Vocabulary load(const std::string& path) {
    auto lines = read_lines(path);
    return from_tokens(lines);
  }

  void save(const std::string& path) const { write_lines(path, tokens_); }

  std::size_t size() const { return tokens_.size(); }

  int id(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? kUnkId : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw VocabError("id " + std::to_string(id) + " outside vocabulary of " + std::to_string(tokens_.size()));
    }
    return tokens_[id];
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

  // Whitespace-tokenized line to ids; unknown tokens become UNK.
  std::vector<int> map_ids(std::string_view line) const {
    std::vector<int> ids;
    for (const auto& tok : split_tokens(line)) ids.push_back(id(tok));
    return ids;
  }

  // Ids back to text, stopping at EOS and dropping padding.
  std::string to_line(std::span<const int> ids) const {
    std::vector<std::string> toks;
    for (int i : ids) {
      if (i == kEosId) break;
      if (i == kPadId) continue;
      toks.push_back(token(i));
    }
    return join_tokens(toks);
  }

 private:
  void add(std::string tok) {
    index_.emplace(tok, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(tok));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

inline Vocabulary build_vocab(std::span<const std::string> lines, std::size_t max_size) {
  return Vocabulary::build(lines, max_size);
}

inline std::vector<int> map_ids(const Vocabulary& v, std::string_view line) { return v.map_ids(line); }

struct SentencePair {
  std::vector<int> src;
  std::vector<int> tgt;  // ends with EOS

  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  friend bool operator==(const ParallelCorpus&, const ParallelCorpus&) = default;
};

// Line-aligned source/target files; EOS is appended to every target.
inline ParallelCorpus load_corpus(const std::string& src_path, const std::string& tgt_path, const Vocabulary& src_vocab,
                                  const Vocabulary& tgt_vocab) {
  const auto src = read_lines(src_path);
  const auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size()) {
    throw DataError(src_path + " has " + std::to_string(src.size()) + " lines but " + tgt_path + " has " +
                    std::to_string(tgt.size()));
  }
  ParallelCorpus c;
  for (std::size_t i = 0; i < src.size(); ++i) {
    SentencePair p{src_vocab.map_ids(src[i]), tgt_vocab.map_ids(tgt[i])};
    if (p.src.empty() || p.tgt.empty()) throw DataError("empty sentence at line " + std::to_string(i + 1) + " of " + src_path + " / " + tgt_path);
    p.tgt.push_back(kEosId);
    c.pairs.push_back(std::move(p));
  }
  return c;
}

// (target position, source position), both 1-based.
struct Link {
  int tgt = 0;
  int src = 0;
  friend auto operator<=>(const Link&, const Link&) = default;
};

using LinkSet = std::set<Link>;

struct AlignmentGold {
  std::vector<LinkSet> sure;
  std::vector<LinkSet> possible;  // superset of sure
};

// "t-i" is a sure link, "t?i" a possible one.
inline AlignmentGold parse_alignments(std::span<const std::string> lines) {
  AlignmentGold g;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    LinkSet sure, possible;
    for (const auto& tok : split_tokens(lines[n])) {
      const auto pos = tok.find_first_of("-?");
      if (pos == std::string::npos || pos == 0 || pos + 1 == tok.size()) {
        throw DataError("bad alignment link '" + tok + "' on line " + std::to_string(n + 1));
      }
      Link l;
      try {
        l = Link{std::stoi(tok.substr(0, pos)), std::stoi(tok.substr(pos + 1))};
      } catch (const std::exception&) {
        throw DataError("bad alignment link '" + tok + "' on line " + std::to_string(n + 1));
      }
      possible.insert(l);
      if (tok[pos] == '-') sure.insert(l);
    }
    g.sure.push_back(std::move(sure));
    g.possible.push_back(std::move(possible));
  }
  return g;
}

inline std::string format_links(const LinkSet& links, const LinkSet* sure = nullptr) {
  std::string out;
  for (const auto& l : links) {
    if (!out.empty()) out += ' ';
    const bool is_sure = sure == nullptr || sure->count(l);
    out += std::to_string(l.tgt) + (is_sure ? "-" : "?") + std::to_string(l.src);
  }
  return out;
}

enum class SyntheticTask { Copy, Reverse, LexSubShift };

inline SyntheticTask synthetic_task_from_string(const std::string& s) {
  if (s == "copy") return SyntheticTask::Copy;
  if (s == "reverse") return SyntheticTask::Reverse;
  if (s == "lex-sub-shift") return SyntheticTask::LexSubShift;
  throw ConfigError("unknown synthetic task '" + s + "' (expected copy, reverse or lex-sub-shift)");
}

struct SyntheticSpec {
  SyntheticTask task = SyntheticTask::Copy;
  std::size_t vocab_size = 20;  // including the reserved ids
  std::size_t min_len = 5;
  std::size_t max_len = 12;
  std::size_t n_pairs = 2000;
  std::uint64_t seed = 1;
  std::size_t shift = 3;  // LEX_SUB_SHIFT lexical offset
};

struct SyntheticCorpus {
  ParallelCorpus corpus;
  std::vector<LinkSet> gold;  // sure links; possible == sure
};

// Symbols are the non-reserved ids. COPY repeats the source, REVERSE reverses
// it, LEX_SUB_SHIFT maps every symbol s to (s + shift) mod V' and swaps each
// adjacent target pair with probability 1/2. The generator records where
// every target position came from; that record is the gold alignment.
inline SyntheticCorpus gen_synthetic(const SyntheticSpec& spec) {
  if (spec.vocab_size < 5) throw ConfigError("gen_synthetic: vocab_size must be at least 5");
  if (spec.min_len == 0 || spec.min_len > spec.max_len) throw ConfigError("gen_synthetic: invalid length range");
  if (spec.n_pairs == 0) throw ConfigError("gen_synthetic: n_pairs must be positive");
  const int symbols = static_cast<int>(spec.vocab_size) - kNumReserved;
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> len_dist(spec.min_len, spec.max_len);
  std::uniform_int_distribution<int> sym_dist(0, symbols - 1);
  std::bernoulli_distribution coin(0.5);

  SyntheticCorpus out;
  for (std::size_t n = 0; n < spec.n_pairs; ++n) {
    const std::size_t len = len_dist(rng);
    std::vector<int> src(len);
    for (auto& s : src) s = kNumReserved + sym_dist(rng);

    std::vector<std::size_t> origin(len);  // target position -> source position
    for (std::size_t i = 0; i < len; ++i) origin[i] = i;
    std::vector<int> tgt(len);
    switch (spec.task) {
      case SyntheticTask::Copy:
        tgt = src;
        break;
      case SyntheticTask::Reverse:
        for (std::size_t i = 0; i < len; ++i) origin[i] = len - 1 - i;
        for (std::size_t i = 0; i < len; ++i) tgt[i] = src[origin[i]];
        break;
      case SyntheticTask::LexSubShift:
        for (std::size_t i = 0; i + 1 < len; i += 2) {
          if (coin(rng)) std::swap(origin[i], origin[i + 1]);
        }
        for (std::size_t i = 0; i < len; ++i) {
          const int sym = src[origin[i]] - kNumReserved;
          tgt[i] = kNumReserved + static_cast<int>((sym + spec.shift) % symbols);
        }
        break;
    }
    LinkSet gold;
    for (std::size_t i = 0; i < len; ++i) gold.insert(Link{static_cast<int>(i + 1), static_cast<int>(origin[i] + 1)});
    tgt.push_back(kEosId);
    out.corpus.pairs.push_back({std::move(src), std::move(tgt)});
    out.gold.push_back(std::move(gold));
  }
  return out;
}

// Vocabulary whose ids coincide with generator ids: symbol k is "s<k>".
inline Vocabulary synthetic_vocabulary(std::size_t vocab_size) {
  std::vector<std::string> toks(Vocabulary::kReserved, Vocabulary::kReserved + kNumReserved);
  for (std::size_t k = kNumReserved; k < vocab_size; ++k) toks.push_back("s" + std::to_string(k - kNumReserved));
  return Vocabulary::from_tokens(toks);
}

}  // namespace pfnmt
