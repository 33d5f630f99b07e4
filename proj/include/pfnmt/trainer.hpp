#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pfnmt/checkpoint.hpp"
#include "pfnmt/data.hpp"
#include "pfnmt/decoder.hpp"
#include "pfnmt/optimizer.hpp"

namespace pfnmt {

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t max_len = 50;  // longer source or target sentences are skipped
  double lr0 = 5e-3;
  bool halve_on_plateau = true;
  double lr_floor_divisor = 64.0;
  std::size_t max_epochs = 30;
  std::uint64_t shuffle_seed = 1;
  std::uint64_t init_seed = 1;
  double grad_clip_norm = 1.0;
  std::optional<std::string> init_from;
  std::optional<std::string> checkpoint_path;
  std::optional<std::string> metrics_path;
  // Each batch is split into this many contiguous slices whose gradients
  // are reduced in slice order; the result does not depend on threads.
  std::size_t shards = 1;
  std::size_t threads = 1;

  void validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (max_len == 0) throw ConfigError("max_len must be at least 1");
    if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
    if (shards == 0) throw ConfigError("shards must be at least 1");
    if (threads == 0) throw ConfigError("threads must be at least 1");
    if (!(lr_floor_divisor >= 1.0)) throw ConfigError("lr_floor_divisor must be at least 1");
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_nll = 0.0;  // per target token
  double train_future = 0.0;
  double train_past = 0.0;
  double dev_nll = 0.0;
  double lr = 0.0;  // rate used during the epoch
  bool improved = false;
  double seconds = 0.0;
};

inline std::string format_metrics_line(const EpochMetrics& m) {
  std::ostringstream os;
  os << std::setprecision(10) << m.epoch << '\t' << m.train_nll << '\t' << m.train_future << '\t' << m.train_past
     << '\t' << m.dev_nll << '\t' << m.lr;
  return os.str();
}

// Halve-on-plateau annealing with patience one epoch and a floor.
struct LrSchedule {
  double lr;
  double floor;
  bool halve = true;
  double best = 0.0;
  bool have_best = false;

  LrSchedule(double lr0, double floor_divisor, bool halve_on_plateau)
      : lr(lr0), floor(lr0 / floor_divisor), halve(halve_on_plateau) {}

  // Records the dev loss of a finished epoch; returns true if it improved.
  bool observe(double dev_nll) {
    if (!have_best || dev_nll < best) {
      have_best = true;
      best = dev_nll;
      return true;
    }
    if (halve) lr = std::max(lr / 2.0, floor);
    return false;
  }
};

struct Batch {
  std::vector<std::size_t> indices;  // positions in the filtered corpus order
  std::vector<std::vector<int>> src, tgt;
};

inline namespace PFNMT_PRECISION_NS {

inline TokenBatch src_batch(const Batch& b) { return TokenBatch::from(b.src); }
inline TokenBatch tgt_batch(const Batch& b) { return TokenBatch::from(b.tgt); }

// Drops pairs longer than max_len (target EOS not counted), shuffles under
// seed and cuts consecutive batches.
inline std::vector<Batch> make_batches(const ParallelCorpus& corpus, std::size_t batch_size, std::size_t max_len,
                                       std::uint64_t seed, bool shuffle = true) {
  if (batch_size == 0) throw ConfigError("make_batches: batch_size must be at least 1");
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < corpus.pairs.size(); ++k) {
    const auto& p = corpus.pairs[k];
    const std::size_t tgt_words = p.tgt.empty() ? 0 : p.tgt.size() - (p.tgt.back() == kEosId ? 1 : 0);
    if (p.src.size() <= max_len && tgt_words <= max_len) keep.push_back(k);
  }
  if (keep.empty()) throw DataError("make_batches: no sentence pair survives the length filter");
  if (shuffle) {
    std::mt19937_64 rng(seed);
    std::shuffle(keep.begin(), keep.end(), rng);
  }
  std::vector<Batch> out;
  for (std::size_t start = 0; start < keep.size(); start += batch_size) {
    Batch b;
    for (std::size_t k = start; k < std::min(keep.size(), start + batch_size); ++k) {
      b.indices.push_back(keep[k]);
      b.src.push_back(corpus.pairs[keep[k]].src);
      b.tgt.push_back(corpus.pairs[keep[k]].tgt);
    }
    out.push_back(std::move(b));
  }
  return out;
}

struct BatchLoss {
  double nll = 0.0;  // sums over the batch
  double future = 0.0;
  double past = 0.0;
  std::size_t tokens = 0;
};

namespace detail {

inline Batch slice(const Batch& b, std::size_t begin, std::size_t end) {
  Batch s;
  for (std::size_t k = begin; k < end; ++k) {
    s.indices.push_back(b.indices[k]);
    s.src.push_back(b.src[k]);
    s.tgt.push_back(b.tgt[k]);
  }
  return s;
}

inline std::size_t count_tokens(const Batch& b) {
  std::size_t n = 0;
  for (const auto& t : b.tgt) n += t.size();
  return n;
}

}  // namespace detail

// Forward/backward for one batch: per-token averaged objective, gradients
// added to the parameters' grad slots in slice order.
inline BatchLoss accumulate_batch_gradients(const ModelConfig& cfg, ModelParams& params, const Batch& batch,
                                            std::size_t shards = 1, std::size_t threads = 1) {
  const std::size_t n = batch.src.size();
  shards = std::max<std::size_t>(1, std::min(shards, n));
  const std::size_t tokens = detail::count_tokens(batch);
  const Real inv_tokens = Real(1) / Real(tokens);

  struct ShardResult {
    std::unique_ptr<Tape> tape;
    BatchLoss loss;
    std::exception_ptr error;
  };
  std::vector<ShardResult> results(shards);
  auto run = [&](std::size_t k) {
    try {
      const std::size_t begin = n * k / shards, end = n * (k + 1) / shards;
      const Batch part = detail::slice(batch, begin, end);
      auto tape = std::make_unique<Tape>();
      const ModelVars vars = bind_model(*tape, params);
      const ForwardPass fp = teacher_forced_pass(cfg, vars, src_batch(part), tgt_batch(part));
      const ObjectiveTerms terms = objective(cfg, vars, fp);
      BatchLoss& l = results[k].loss;
      l.nll = static_cast<double>(terms.nll.value()[0]);
      if (terms.future) l.future = static_cast<double>(terms.future->value()[0]);
      if (terms.past) l.past = static_cast<double>(terms.past->value()[0]);
      l.tokens = fp.tokens;
      tape->backward(scale(terms.total, inv_tokens), /*flush_params=*/false);
      results[k].tape = std::move(tape);
    } catch (...) {
      results[k].error = std::current_exception();
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, shards));
  if (workers == 1) {
    for (std::size_t k = 0; k < shards; ++k) run(k);
  } else {
    for (std::size_t start = 0; start < shards; start += workers) {
      std::vector<std::thread> pool;
      for (std::size_t k = start; k < std::min(shards, start + workers); ++k) pool.emplace_back(run, k);
      for (auto& t : pool) t.join();
    }
  }
  BatchLoss total;
  for (auto& r : results) {
    if (r.error) std::rethrow_exception(r.error);
    r.tape->flush_param_grads();
    total.nll += r.loss.nll;
    total.future += r.loss.future;
    total.past += r.loss.past;
    total.tokens += r.loss.tokens;
  }
  return total;
}

// Summed teacher-forced losses on a corpus, no gradients.
inline BatchLoss evaluate_corpus(const ModelConfig& cfg, const ModelParams& params, const ParallelCorpus& corpus,
                                 std::size_t batch_size) {
  BatchLoss total;
  for (std::size_t start = 0; start < corpus.pairs.size(); start += batch_size) {
    std::vector<std::vector<int>> src, tgt;
    for (std::size_t k = start; k < std::min(corpus.pairs.size(), start + batch_size); ++k) {
      src.push_back(corpus.pairs[k].src);
      tgt.push_back(corpus.pairs[k].tgt);
    }
    Tape tape(false);
    const ModelVars vars = bind_model(tape, params);
    const ForwardPass fp = teacher_forced_pass(cfg, vars, TokenBatch::from(src), TokenBatch::from(tgt));
    const ObjectiveTerms terms = objective(cfg, vars, fp);
    total.nll += static_cast<double>(terms.nll.value()[0]);
    if (terms.future) total.future += static_cast<double>(terms.future->value()[0]);
    if (terms.past) total.past += static_cast<double>(terms.past->value()[0]);
    total.tokens += fp.tokens;
  }
  return total;
}

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  double best_dev_nll = 0.0;
  std::size_t best_epoch = 0;
  ModelParams best_params;
  std::optional<SharedLoadReport> init_report;
};

// Called after every epoch; returning false stops training.
using EpochCallback = std::function<bool(const EpochMetrics&, const ModelParams&)>;

// Epoch loop: shuffle, per-batch Adam on the per-token objective with global
// norm clipping, dev cross-entropy after each epoch, lr halved when it does
// not improve (floored at lr0 / lr_floor_divisor), best parameters kept and
// checkpointed.
inline TrainResult train(const TrainConfig& tc, Model& model, const ParallelCorpus& train_corpus,
                         const ParallelCorpus& dev_corpus, const EpochCallback& on_epoch = {}) {
  tc.validate();
  if (dev_corpus.pairs.empty()) throw DataError("train: dev corpus is empty");
  TrainResult result;
  if (tc.init_from) result.init_report = load_shared_params(model.params, *tc.init_from);

  auto refs = model.params.refs();
  AdamState adam = AdamState::for_params(refs, tc.lr0);
  LrSchedule schedule(tc.lr0, tc.lr_floor_divisor, tc.halve_on_plateau);
  std::ofstream metrics;
  if (tc.metrics_path) {
    metrics.open(*tc.metrics_path);
    if (!metrics) throw DataError("cannot write metrics log " + *tc.metrics_path);
  }
  result.best_params = model.params;

  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batches = make_batches(train_corpus, tc.batch_size, tc.max_len, tc.shuffle_seed + epoch);
    EpochMetrics em;
    em.epoch = epoch;
    em.lr = adam.lr;
    BatchLoss sums;
    for (const auto& b : batches) {
      model.params.zero_grad();
      const BatchLoss l = accumulate_batch_gradients(model.config, model.params, b, tc.shards, tc.threads);
      if (!std::isfinite(l.nll) || !std::isfinite(l.future) || !std::isfinite(l.past)) {
        throw DivergenceError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
      }
      clip_grad_norm(refs, tc.grad_clip_norm);
      adam_step(adam, refs);
      sums.nll += l.nll;
      sums.future += l.future;
      sums.past += l.past;
      sums.tokens += l.tokens;
    }
    model.params.zero_grad();
    const BatchLoss dev = evaluate_corpus(model.config, model.params, dev_corpus, tc.batch_size);
    em.train_nll = sums.nll / double(sums.tokens);
    em.train_future = sums.future / double(sums.tokens);
    em.train_past = sums.past / double(sums.tokens);
    em.dev_nll = dev.nll / double(dev.tokens);
    if (!std::isfinite(em.dev_nll)) throw DivergenceError("training diverged: non-finite dev loss");

    em.improved = schedule.observe(em.dev_nll);
    adam.lr = schedule.lr;
    if (em.improved) {
      result.best_dev_nll = em.dev_nll;
      result.best_epoch = epoch;
      result.best_params = model.params;
      if (tc.checkpoint_path) {
        save_checkpoint(*tc.checkpoint_path, model.config, model.params, &adam, {epoch, em.dev_nll});
      }
    }
    em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (metrics) metrics << format_metrics_line(em) << '\n' << std::flush;
    result.epochs.push_back(em);
    if (on_epoch && !on_epoch(em, model.params)) break;
  }
  return result;
}

}  // namespace PFNMT_PRECISION_NS
}  // namespace pfnmt
