#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "gradcheck_extended.hpp"
#include "json.hpp"
#include "pfnmt/checkpoint.hpp"
#include "pfnmt/config.hpp"
#include "pfnmt/data.hpp"
#include "pfnmt/evaluation.hpp"
#include "pfnmt/inference.hpp"
#include "pfnmt/trainer.hpp"

namespace {

using namespace pfnmt;

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigExit = 2,
  kDataExit = 3,
  kDivergenceExit = 4,
  kCheckpointExit = 5,
};

struct Flags {
  std::string config;
  std::string init_from;
  std::optional<std::size_t> beam;
  bool greedy = false;
  std::string rerank_weights;
  std::string dump_alignments;
  std::vector<std::string> nbest;  // K PATH
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string input, output;
  // evaluate
  std::string hyp, ref, src, gold, pred, task, report;
  bool ignore_case = false;
  // gradcheck
  std::optional<std::size_t> dims;
  std::vector<std::string> presets;
  bool inject_fault = false;
};

RunConfig load_config(const Flags& f, bool required) {
  RunConfig rc;
  if (!f.config.empty()) rc = load_run_config(f.config);
  else if (required) throw ConfigError("this subcommand needs --config PATH");
  if (!f.init_from.empty()) rc.train.init_from = f.init_from;
  if (f.beam) {
    if (*f.beam == 0) throw ConfigError("--beam must be at least 1");
    rc.decode.beam = *f.beam;
  }
  if (f.greedy) rc.decode.greedy = true;
  if (!f.rerank_weights.empty()) rc.decode.rerank = parse_rerank_weights(f.rerank_weights);
  if (!f.dump_alignments.empty()) rc.paths.alignments_out = f.dump_alignments;
  if (!f.nbest.empty()) {
    std::size_t k = 0;
    try {
      k = std::stoul(f.nbest[0]);
    } catch (const std::exception&) {
      throw ConfigError("--nbest expects K PATH");
    }
    if (k == 0) throw ConfigError("--nbest K must be at least 1");
    rc.paths.nbest_k = k;
    rc.paths.nbest_path = f.nbest[1];
  }
  if (f.seed) {
    rc.train.init_seed = rc.train.shuffle_seed = *f.seed;
    rc.gen.seed = *f.seed;
  }
  if (f.threads) {
    if (*f.threads == 0) throw ConfigError("--threads must be at least 1");
    rc.train.threads = rc.decode.threads = *f.threads;
  }
  if (!f.input.empty()) rc.paths.translate_input = f.input;
  if (!f.output.empty()) rc.paths.translate_output = f.output;
  return rc;
}

void require(const std::string& value, const char* key) {
  if (value.empty()) throw ConfigError(std::string("config key '") + key + "' is required");
}

Vocabulary load_or_build_vocab(const std::string& vocab_path, const std::string& corpus_path, std::size_t max_size) {
  if (std::filesystem::exists(vocab_path)) return Vocabulary::load(vocab_path);
  const auto lines = read_lines(corpus_path);
  Vocabulary v = build_vocab(lines, max_size);
  v.save(vocab_path);
  std::cerr << "built vocabulary of " << v.size() << " tokens from " << corpus_path << " -> " << vocab_path << '\n';
  return v;
}

ModelConfig model_config_for(const RunConfig& rc, const Vocabulary& src, const Vocabulary& tgt) {
  ModelConfig m = rc.model;
  m.src_vocab = src.size();
  m.tgt_vocab = tgt.size();
  m.validate();
  return m;
}

int cmd_train(const Flags& f) {
  const RunConfig rc = load_config(f, true);
  const auto& p = rc.paths;
  require(p.train_src, "train_src");
  require(p.train_tgt, "train_tgt");
  require(p.dev_src, "dev_src");
  require(p.dev_tgt, "dev_tgt");
  require(p.src_vocab_file, "src_vocab_file");
  require(p.tgt_vocab_file, "tgt_vocab_file");
  require(p.checkpoint, "checkpoint");

  const Vocabulary src_vocab = load_or_build_vocab(p.src_vocab_file, p.train_src, p.src_vocab_size);
  const Vocabulary tgt_vocab = load_or_build_vocab(p.tgt_vocab_file, p.train_tgt, p.tgt_vocab_size);
  const ParallelCorpus train_corpus = load_corpus(p.train_src, p.train_tgt, src_vocab, tgt_vocab);
  const ParallelCorpus dev_corpus = load_corpus(p.dev_src, p.dev_tgt, src_vocab, tgt_vocab);

  Model model = Model::random(model_config_for(rc, src_vocab, tgt_vocab), rc.train.init_seed);
  TrainConfig tc = rc.train;
  tc.checkpoint_path = p.checkpoint;
  tc.metrics_path = p.metrics_log.empty() ? p.checkpoint + ".metrics.tsv" : p.metrics_log;

  {
    std::ofstream eff(p.checkpoint + ".config");
    if (!eff) throw DataError("cannot write " + p.checkpoint + ".config");
    eff << write_run_config(rc);
  }
  std::cerr << "training " << (rc.preset.empty() ? "custom" : rc.preset) << " model, " << model.params.count()
            << " parameters, " << train_corpus.size() << " training pairs\n";
  const auto result = train(tc, model, train_corpus, dev_corpus, [](const EpochMetrics& m, const ModelParams&) {
    std::cerr << "epoch " << m.epoch << "  train-nll " << m.train_nll << "  dev-nll " << m.dev_nll << "  lr " << m.lr
              << (m.improved ? "  (best)" : "") << "  " << m.seconds << "s\n";
    return true;
  });
  if (result.init_report) {
    std::cerr << "init-from " << *tc.init_from << ": loaded " << result.init_report->loaded << " shared tensors ("
              << result.init_report->widened << " widened), " << result.init_report->fresh << " fresh\n";
  }
  std::cerr << "best dev-nll " << result.best_dev_nll << " at epoch " << result.best_epoch << " -> " << p.checkpoint
            << '\n';
  return kOk;
}

int cmd_translate(const Flags& f) {
  const RunConfig rc = load_config(f, true);
  const auto& p = rc.paths;
  require(p.checkpoint, "checkpoint");
  require(p.src_vocab_file, "src_vocab_file");
  require(p.tgt_vocab_file, "tgt_vocab_file");
  require(p.translate_input, "translate_input (or --input)");

  const Vocabulary src_vocab = Vocabulary::load(p.src_vocab_file);
  const Vocabulary tgt_vocab = Vocabulary::load(p.tgt_vocab_file);
  Checkpoint ck = load_checkpoint(p.checkpoint);
  const ModelConfig expected = model_config_for(rc, src_vocab, tgt_vocab);
  if (!(expected == ck.config)) {
    throw CheckpointError("checkpoint " + p.checkpoint + " was trained with a different model configuration\n  config:     " +
                          model_config_to_json(expected).dump() + "\n  checkpoint: " + model_config_to_json(ck.config).dump());
  }
  const Model model{ck.config, std::move(ck.params)};

  const auto lines = read_lines(p.translate_input);
  std::vector<std::vector<int>> srcs;
  std::vector<std::size_t> where;  // input line of each non-empty source
  for (std::size_t k = 0; k < lines.size(); ++k) {
    auto ids = src_vocab.map_ids(lines[k]);
    if (ids.empty()) continue;
    where.push_back(k);
    srcs.push_back(std::move(ids));
  }
  const auto translations = translate_corpus(model, srcs, rc.decode);

  std::vector<std::string> out(lines.size()), aligns(lines.size()), nbest;
  for (std::size_t j = 0; j < translations.size(); ++j) {
    const std::size_t k = where[j];
    const auto& tr = translations[j];
    out[k] = tgt_vocab.to_line(tr.best.words());
    aligns[k] = format_links(extract_alignment(tr.best));
    for (std::size_t r = 0; r < std::min(p.nbest_k, tr.nbest.size()); ++r) nbest.push_back(nbest_line(k, tr.nbest[r], tgt_vocab));
  }
  if (p.translate_output.empty()) {
    for (const auto& l : out) std::cout << l << '\n';
  } else {
    write_lines(p.translate_output, out);
  }
  if (!p.alignments_out.empty()) write_lines(p.alignments_out, aligns);
  if (p.nbest_k) write_lines(p.nbest_path, nbest);
  return kOk;
}

std::vector<std::vector<int>> intern_lines(const std::vector<std::string>& lines,
                                           std::unordered_map<std::string, int>& ids) {
  std::vector<std::vector<int>> out;
  for (const auto& l : lines) {
    std::vector<int> row;
    for (const auto& tok : split_tokens(l)) row.push_back(ids.emplace(tok, static_cast<int>(ids.size())).first->second);
    out.push_back(std::move(row));
  }
  return out;
}

int cmd_evaluate(const Flags& f) {
  const RunConfig rc = load_config(f, false);
  EvalConfig e = rc.eval;
  if (!f.hyp.empty()) e.hyp = f.hyp;
  if (!f.ref.empty()) e.ref = f.ref;
  if (!f.src.empty()) e.src = f.src;
  if (!f.gold.empty()) e.gold_alignments = f.gold;
  if (!f.pred.empty()) e.pred_alignments = f.pred;
  if (!f.task.empty()) e.coverage_task = f.task;
  if (!f.report.empty()) e.report = f.report;
  if (f.ignore_case) e.case_sensitive = false;
  require(e.hyp, "hyp");
  require(e.ref, "ref");
  std::optional<CoverageTask> task;
  if (!e.coverage_task.empty()) {
    task = coverage_task_from_string(e.coverage_task);
    require(e.src, "eval_src");
  }

  const auto hyps = read_lines(e.hyp);
  const auto refs = read_lines(e.ref);
  if (hyps.size() != refs.size()) {
    throw DataError(e.hyp + " has " + std::to_string(hyps.size()) + " lines but " + e.ref + " has " +
                    std::to_string(refs.size()));
  }
  nlohmann::ordered_json report;
  report["sentences"] = hyps.size();
  report["bleu"] = hyps.empty() ? 0.0 : corpus_bleu(hyps, refs, 4, e.case_sensitive);
  if (!e.gold_alignments.empty()) {
    require(e.pred_alignments, "pred_alignments");
    const auto gold = parse_alignments(read_lines(e.gold_alignments));
    const auto pred = parse_alignments(read_lines(e.pred_alignments));
    report["aer"] = aer(pred.possible, gold);
  }
  if (task) {
    const auto srcs = read_lines(e.src);
    if (srcs.size() != hyps.size()) throw DataError(e.src + " and " + e.hyp + " have different line counts");
    std::unordered_map<std::string, int> ids;
    const auto src_ids = intern_lines(srcs, ids);
    const auto hyp_ids = intern_lines(hyps, ids);
    const auto cov = coverage_diagnostics(src_ids, hyp_ids, *task);
    report["over_ratio"] = cov.over;
    report["under_ratio"] = cov.under;
  }
  const std::string text = report.dump(2) + "\n";
  if (e.report.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(e.report);
    if (!out) throw DataError("cannot write " + e.report);
    out << text;
  }
  return kOk;
}

int cmd_gradcheck(const Flags& f) {
  GradcheckOptions o;
  if (f.seed) o.seed = *f.seed;
  if (f.dims) {
    if (*f.dims == 0) throw ConfigError("--dims must be positive");
    o.emb = o.enc = o.dec = *f.dims;
  }
  if (!f.presets.empty()) {
    for (const auto& name : f.presets) (void)apply_preset(ModelConfig{}, name);
    o.presets = f.presets;
  }
  o.corrupt_tanh_grad = f.inject_fault;
  const auto t0 = std::chrono::steady_clock::now();
  const GradcheckReport r = run_gradcheck_extended(o);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%-28s %-14s %-8s %s\n", "module", "max_rel_error", "status", "worst parameter");
  for (const auto& e : r.entries) {
    std::printf("%-28s %-14.3e %-8s %s\n", e.module.c_str(), e.max_rel_error,
                e.max_rel_error < r.tolerance ? "ok" : "FAIL", e.worst_param.c_str());
  }
  std::fprintf(stderr, "gradcheck: %zu checks in %.1fs, tolerance %.0e\n", r.entries.size(), secs, r.tolerance);
  if (r.passed()) return kOk;
  std::printf("failing parameters:\n");
  for (const auto& e : r.entries)
    for (const auto& name : e.failing) std::printf("  %s: %s\n", e.module.c_str(), name.c_str());
  return kFailure;
}

int cmd_gen_data(const Flags& f) {
  const RunConfig rc = load_config(f, false);
  const GenDataConfig& g = rc.gen;
  SyntheticSpec spec;
  spec.task = synthetic_task_from_string(g.task);
  spec.vocab_size = g.vocab_size;
  spec.min_len = g.min_len;
  spec.max_len = g.max_len;
  spec.shift = g.shift;
  const Vocabulary vocab = synthetic_vocabulary(g.vocab_size);
  std::filesystem::create_directories(g.out_dir);
  const std::filesystem::path dir(g.out_dir);
  vocab.save((dir / "vocab.src").string());
  vocab.save((dir / "vocab.tgt").string());
  const std::pair<const char*, std::size_t> splits[] = {{"train", g.n_train}, {"dev", g.n_dev}, {"test", g.n_test}};
  std::uint64_t offset = 0;
  for (const auto& [name, n] : splits) {
    if (n == 0) continue;
    spec.n_pairs = n;
    spec.seed = g.seed * 1000003ULL + offset++;
    const SyntheticCorpus data = gen_synthetic(spec);
    std::vector<std::string> src, tgt, align;
    for (std::size_t k = 0; k < data.corpus.size(); ++k) {
      src.push_back(vocab.to_line(data.corpus.pairs[k].src));
      tgt.push_back(vocab.to_line(data.corpus.pairs[k].tgt));
      align.push_back(format_links(data.gold[k]));
    }
    write_lines((dir / (std::string(name) + ".src")).string(), src);
    write_lines((dir / (std::string(name) + ".tgt")).string(), tgt);
    write_lines((dir / (std::string(name) + ".align")).string(), align);
    std::cerr << "wrote " << n << " " << g.task << " pairs to " << (dir / name).string() << ".{src,tgt,align}\n";
  }
  return kOk;
}

void add_config_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "Run configuration file (key = value)");
  sub->add_option("--seed", f.seed, "Random seed");
  sub->add_option("--threads", f.threads, "Worker threads");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention NMT with Past and Future layers"};
  app.require_subcommand(1);
  Flags f;

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  add_config_flags(train_cmd, f);
  train_cmd->add_option("--init-from", f.init_from, "Initialize shared parameters from this checkpoint");

  auto* translate_cmd = app.add_subcommand("translate", "Translate a file");
  add_config_flags(translate_cmd, f);
  translate_cmd->add_option("--input", f.input, "Source sentences, one per line");
  translate_cmd->add_option("--output", f.output, "Output file (default stdout)");
  translate_cmd->add_option("--beam", f.beam, "Beam size");
  translate_cmd->add_flag("--greedy", f.greedy, "Argmax decoding instead of beam search");
  translate_cmd->add_option("--rerank-weights", f.rerank_weights, "a,b,c weights for NLL, Future loss, Past loss");
  translate_cmd->add_option("--dump-alignments", f.dump_alignments, "Write attention alignments (t-i links)");
  translate_cmd->add_option("--nbest", f.nbest, "Write K-best lists: K PATH")->expected(2);

  auto* eval_cmd = app.add_subcommand("evaluate", "Score translations");
  add_config_flags(eval_cmd, f);
  eval_cmd->add_option("--hyp", f.hyp, "Hypothesis file");
  eval_cmd->add_option("--ref", f.ref, "Reference file");
  eval_cmd->add_option("--src", f.src, "Source file for coverage ratios");
  eval_cmd->add_option("--gold-alignments", f.gold, "Gold alignments (t-i sure, t?i possible)");
  eval_cmd->add_option("--pred-alignments", f.pred, "Predicted alignments");
  eval_cmd->add_option("--task", f.task, "Coverage task: copy or permuted-copy");
  eval_cmd->add_option("--report", f.report, "Write the report here instead of stdout");
  eval_cmd->add_flag("--ignore-case", f.ignore_case, "Case-insensitive BLEU");

  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  add_config_flags(grad_cmd, f);
  grad_cmd->add_option("--dims", f.dims, "Embedding and hidden size (default 8)");
  grad_cmd->add_option("--preset", f.presets, "Restrict to these presets");
  grad_cmd->add_flag("--inject-fault", f.inject_fault, "Corrupt the tanh gradient rule (negative control)");

  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic parallel corpus");
  add_config_flags(gen_cmd, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigExit;
  }

  try {
    if (*train_cmd) return cmd_train(f);
    if (*translate_cmd) return cmd_translate(f);
    if (*eval_cmd) return cmd_evaluate(f);
    if (*grad_cmd) return cmd_gradcheck(f);
    if (*gen_cmd) return cmd_gen_data(f);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataExit;
  } catch (const VocabError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataExit;
  } catch (const EmptySourceError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataExit;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDivergenceExit;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kCheckpointExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
