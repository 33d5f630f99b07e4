#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pfnmt/data.hpp"
#include "pfnmt/errors.hpp"
#include "pfnmt/inference.hpp"
#include "pfnmt/model_config.hpp"
#include "pfnmt/trainer.hpp"

namespace pfnmt {

struct PathsConfig {
  std::string train_src, train_tgt;
  std::string dev_src, dev_tgt;
  std::string test_src, test_tgt;
  std::string src_vocab_file, tgt_vocab_file;
  std::size_t src_vocab_size = 64;  // upper bound when a vocabulary is built
  std::size_t tgt_vocab_size = 64;
  std::string checkpoint;
  std::string metrics_log;
  std::string translate_input;
  std::string translate_output;  // empty: stdout
  std::string nbest_path;
  std::size_t nbest_k = 0;
  std::string alignments_out;
};

struct EvalConfig {
  std::string hyp, ref;
  std::string src;  // token lines compared against hyp for coverage
  std::string gold_alignments;
  std::string pred_alignments;
  std::string coverage_task;  // empty, copy or permuted-copy
  bool case_sensitive = true;
  std::string report;  // empty: stdout
};

struct GenDataConfig {
  std::string task = "copy";
  std::size_t vocab_size = 20;
  std::size_t min_len = 5;
  std::size_t max_len = 12;
  std::size_t n_train = 2000;
  std::size_t n_dev = 200;
  std::size_t n_test = 200;
  std::uint64_t seed = 1;
  std::size_t shift = 3;
  std::string out_dir = "data";
};

struct RunConfig {
  std::string preset;  // empty: layer switches come from explicit keys only
  ModelConfig model;
  TrainConfig train;
  DecodeOptions decode;
  PathsConfig paths;
  EvalConfig eval;
  GenDataConfig gen;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

class ConfigReader {
 public:
  explicit ConfigReader(std::map<std::string, std::pair<std::string, int>> kv) : kv_(std::move(kv)) {}

  template <class T>
  void get(const std::string& key, T& out) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return;
    used_.insert(key);
    const auto& [text, line] = it->second;
    try {
      out = convert<T>(text);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line) + ": " + key + ": " + e.what());
    }
  }

  template <class T, class F>
  void get_with(const std::string& key, T& out, F parse) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return;
    used_.insert(key);
    try {
      out = parse(it->second.first);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(it->second.second) + ": " + key + ": " + e.what());
    }
  }

  void check_all_used() const {
    for (const auto& [k, v] : kv_)
      if (!used_.count(k)) throw ConfigError("config line " + std::to_string(v.second) + ": unknown key '" + k + "'");
  }

 private:
  template <class T>
  static T convert(const std::string& s) {
    if constexpr (std::is_same_v<T, std::string>) {
      return s;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (s == "true" || s == "1" || s == "yes") return true;
      if (s == "false" || s == "0" || s == "no") return false;
      throw ConfigError("expected a boolean, got '" + s + "'");
    } else if constexpr (std::is_same_v<T, double>) {
      std::size_t pos = 0;
      double v = 0;
      try {
        v = std::stod(s, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != s.size() || s.empty()) throw ConfigError("expected a number, got '" + s + "'");
      return v;
    } else {
      T v{};
      const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
        throw ConfigError("expected a non-negative integer, got '" + s + "'");
      }
      return v;
    }
  }

  std::map<std::string, std::pair<std::string, int>> kv_;
  std::set<std::string> used_;
};

}  // namespace detail

inline RerankWeights parse_rerank_weights(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = detail::trim(part);
    std::size_t pos = 0;
    double x = 0;
    try {
      x = std::stod(part, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (part.empty() || pos != part.size()) throw ConfigError("rerank weights must be numbers, got '" + s + "'");
    v.push_back(x);
  }
  if (v.size() != 3) throw ConfigError("rerank weights need three comma-separated values a,b,c, got '" + s + "'");
  return {v[0], v[1], v[2]};
}

// Flat "key = value" text; '#' starts a comment. Every key is optional and
// unknown or repeated keys are errors. A preset is applied before the
// explicit keys, so explicit layer switches override it.
inline RunConfig parse_run_config(std::istream& in) {
  std::map<std::string, std::pair<std::string, int>> kv;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": missing key");
    if (!kv.emplace(key, std::pair{value, line_no}).second) {
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }

  RunConfig c;
  detail::ConfigReader r(std::move(kv));
  r.get("preset", c.preset);
  if (!c.preset.empty()) c.model = apply_preset(c.model, c.preset);

  ModelConfig& m = c.model;
  r.get("emb", m.emb);
  r.get("enc", m.enc);
  r.get("dec", m.dec);
  r.get("att", m.att);
  r.get("readout", m.readout);
  r.get("use_future", m.use_future);
  r.get_with("future_kind", m.future_kind, future_kind_from_string);
  r.get("use_past", m.use_past);
  r.get("use_losses", m.use_losses);
  r.get_with("feed_future_timing", m.feed_future_timing, feed_timing_from_string);
  r.get("separate_future_init", m.separate_future_init);
  r.get_with("decoder_init", m.decoder_init, init_mode_from_string);
  r.get_with("future_init", m.future_init, init_mode_from_string);
  r.get("future_loss_weight", m.future_loss_weight);
  r.get("past_loss_weight", m.past_loss_weight);

  TrainConfig& t = c.train;
  r.get("batch_size", t.batch_size);
  r.get("max_len", t.max_len);
  r.get("lr0", t.lr0);
  r.get("halve_on_plateau", t.halve_on_plateau);
  r.get("lr_floor_divisor", t.lr_floor_divisor);
  r.get("max_epochs", t.max_epochs);
  r.get("shuffle_seed", t.shuffle_seed);
  r.get("init_seed", t.init_seed);
  r.get("grad_clip_norm", t.grad_clip_norm);
  std::string init_from;
  r.get("init_from", init_from);
  if (!init_from.empty()) t.init_from = init_from;
  r.get("shards", t.shards);
  r.get("threads", t.threads);

  DecodeOptions& d = c.decode;
  r.get("beam", d.beam);
  r.get("greedy", d.greedy);
  r.get("max_out_len", d.max_out_len);
  r.get("length_normalize", d.length_normalize);
  r.get_with("rerank_weights", d.rerank, parse_rerank_weights);
  d.threads = t.threads;

  PathsConfig& p = c.paths;
  r.get("train_src", p.train_src);
  r.get("train_tgt", p.train_tgt);
  r.get("dev_src", p.dev_src);
  r.get("dev_tgt", p.dev_tgt);
  r.get("test_src", p.test_src);
  r.get("test_tgt", p.test_tgt);
  r.get("src_vocab_file", p.src_vocab_file);
  r.get("tgt_vocab_file", p.tgt_vocab_file);
  r.get("src_vocab_size", p.src_vocab_size);
  r.get("tgt_vocab_size", p.tgt_vocab_size);
  r.get("checkpoint", p.checkpoint);
  r.get("metrics_log", p.metrics_log);
  r.get("translate_input", p.translate_input);
  r.get("translate_output", p.translate_output);
  r.get("nbest_path", p.nbest_path);
  r.get("nbest_k", p.nbest_k);
  r.get("alignments_out", p.alignments_out);

  EvalConfig& e = c.eval;
  r.get("hyp", e.hyp);
  r.get("ref", e.ref);
  r.get("eval_src", e.src);
  r.get("gold_alignments", e.gold_alignments);
  r.get("pred_alignments", e.pred_alignments);
  r.get("coverage_task", e.coverage_task);
  r.get("case_sensitive", e.case_sensitive);
  r.get("report", e.report);

  GenDataConfig& g = c.gen;
  r.get("gen_task", g.task);
  r.get("gen_vocab_size", g.vocab_size);
  r.get("gen_min_len", g.min_len);
  r.get("gen_max_len", g.max_len);
  r.get("gen_train_pairs", g.n_train);
  r.get("gen_dev_pairs", g.n_dev);
  r.get("gen_test_pairs", g.n_test);
  r.get("gen_seed", g.seed);
  r.get("gen_shift", g.shift);
  r.get("gen_out_dir", g.out_dir);

  r.check_all_used();
  if (c.decode.beam == 0) throw ConfigError("beam must be at least 1");
  if (c.decode.max_out_len == 0) throw ConfigError("max_out_len must be at least 1");
  c.train.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_run_config(in);
}

inline RunConfig parse_run_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_run_config(in);
}

// Every effective setting, in a form parse_run_config reads back to the same
// configuration.
inline std::string write_run_config(const RunConfig& c) {
  std::ostringstream os;
  os << std::setprecision(17);
  auto b = [](bool v) { return v ? "true" : "false"; };
  auto kv = [&](const char* k, const auto& v) { os << k << " = " << v << '\n'; };
  const ModelConfig& m = c.model;
  os << "# model\n";
  if (!c.preset.empty()) kv("preset", c.preset);
  kv("emb", m.emb);
  kv("enc", m.enc);
  kv("dec", m.dec);
  kv("att", m.att);
  kv("readout", m.readout);
  kv("use_future", b(m.use_future));
  kv("future_kind", to_string(m.future_kind));
  kv("use_past", b(m.use_past));
  kv("use_losses", b(m.use_losses));
  kv("feed_future_timing", to_string(m.feed_future_timing));
  kv("separate_future_init", b(m.separate_future_init));
  kv("decoder_init", to_string(m.decoder_init));
  kv("future_init", to_string(m.future_init));
  kv("future_loss_weight", m.future_loss_weight);
  kv("past_loss_weight", m.past_loss_weight);
  const TrainConfig& t = c.train;
  os << "# training\n";
  kv("batch_size", t.batch_size);
  kv("max_len", t.max_len);
  kv("lr0", t.lr0);
  kv("halve_on_plateau", b(t.halve_on_plateau));
  kv("lr_floor_divisor", t.lr_floor_divisor);
  kv("max_epochs", t.max_epochs);
  kv("shuffle_seed", t.shuffle_seed);
  kv("init_seed", t.init_seed);
  kv("grad_clip_norm", t.grad_clip_norm);
  if (t.init_from) kv("init_from", *t.init_from);
  kv("shards", t.shards);
  kv("threads", t.threads);
  const DecodeOptions& d = c.decode;
  os << "# decoding\n";
  kv("beam", d.beam);
  kv("greedy", b(d.greedy));
  kv("max_out_len", d.max_out_len);
  kv("length_normalize", b(d.length_normalize));
  os << "rerank_weights = " << d.rerank.nll << ',' << d.rerank.future << ',' << d.rerank.past << '\n';
  const PathsConfig& p = c.paths;
  os << "# files\n";
  auto path = [&](const char* k, const std::string& v) {
    if (!v.empty()) kv(k, v);
  };
  path("train_src", p.train_src);
  path("train_tgt", p.train_tgt);
  path("dev_src", p.dev_src);
  path("dev_tgt", p.dev_tgt);
  path("test_src", p.test_src);
  path("test_tgt", p.test_tgt);
  path("src_vocab_file", p.src_vocab_file);
  path("tgt_vocab_file", p.tgt_vocab_file);
  kv("src_vocab_size", p.src_vocab_size);
  kv("tgt_vocab_size", p.tgt_vocab_size);
  path("checkpoint", p.checkpoint);
  path("metrics_log", p.metrics_log);
  path("translate_input", p.translate_input);
  path("translate_output", p.translate_output);
  path("nbest_path", p.nbest_path);
  if (p.nbest_k) kv("nbest_k", p.nbest_k);
  path("alignments_out", p.alignments_out);
  const EvalConfig& e = c.eval;
  os << "# evaluation\n";
  path("hyp", e.hyp);
  path("ref", e.ref);
  path("eval_src", e.src);
  path("gold_alignments", e.gold_alignments);
  path("pred_alignments", e.pred_alignments);
  path("coverage_task", e.coverage_task);
  kv("case_sensitive", b(e.case_sensitive));
  path("report", e.report);
  const GenDataConfig& g = c.gen;
  os << "# synthetic data\n";
  kv("gen_task", g.task);
  kv("gen_vocab_size", g.vocab_size);
  kv("gen_min_len", g.min_len);
  kv("gen_max_len", g.max_len);
  kv("gen_train_pairs", g.n_train);
  kv("gen_dev_pairs", g.n_dev);
  kv("gen_test_pairs", g.n_test);
  kv("gen_seed", g.seed);
  kv("gen_shift", g.shift);
  kv("gen_out_dir", g.out_dir);
  return os.str();
}

}  // namespace pfnmt
