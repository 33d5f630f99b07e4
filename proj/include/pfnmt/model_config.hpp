#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pfnmt/errors.hpp"

namespace pfnmt {

enum class FutureCellKind { Gru, GruO, GruI };

inline std::string to_string(FutureCellKind k) {
  switch (k) {
    case FutureCellKind::Gru: return "gru";
    case FutureCellKind::GruO: return "gru-o";
    case FutureCellKind::GruI: return "gru-i";
  }
  return "?";
}

inline FutureCellKind future_kind_from_string(const std::string& s) {
  if (s == "gru") return FutureCellKind::Gru;
  if (s == "gru-o") return FutureCellKind::GruO;
  if (s == "gru-i") return FutureCellKind::GruI;
  throw ConfigError("unknown future cell kind '" + s + "' (expected gru, gru-o or gru-i)");
}

// Reserved vocabulary ids shared by every component.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kBosId = 2;
inline constexpr int kEosId = 3;
inline constexpr int kNumReserved = 4;

// Which Future state the decoder recurrence consumes: the freshly updated
// one (CURRENT) or the one from the previous step (PREVIOUS).
enum class FeedTiming { Current, Previous };

// How a recurrent layer is started.
enum class InitMode { Summary, Zero };

inline std::string to_string(FeedTiming t) { return t == FeedTiming::Current ? "current" : "previous"; }
inline std::string to_string(InitMode m) { return m == InitMode::Zero ? "zero" : "summary"; }

inline FeedTiming feed_timing_from_string(const std::string& s) {
  if (s == "current") return FeedTiming::Current;
  if (s == "previous") return FeedTiming::Previous;
  throw ConfigError("unknown feed timing '" + s + "' (expected current or previous)");
}

inline InitMode init_mode_from_string(const std::string& s) {
  if (s == "summary") return InitMode::Summary;
  if (s == "zero") return InitMode::Zero;
  throw ConfigError("unknown init mode '" + s + "' (expected summary or zero)");
}

struct ModelConfig {
  std::size_t src_vocab = 64;
  std::size_t tgt_vocab = 64;
  std::size_t emb = 32;
  std::size_t enc = 64;
  std::size_t dec = 64;
  std::size_t att = 0;      // 0 means "same as dec"
  std::size_t readout = 0;  // 0 means "same as dec"

  bool use_future = false;
  FutureCellKind future_kind = FutureCellKind::GruI;
  bool use_past = false;
  bool use_losses = false;
  FeedTiming feed_future_timing = FeedTiming::Previous;
  bool separate_future_init = false;
  InitMode decoder_init = InitMode::Summary;
  InitMode future_init = InitMode::Summary;

  double future_loss_weight = 1.0;
  double past_loss_weight = 1.0;

  std::size_t att_dim() const { return att ? att : dec; }
  std::size_t readout_dim() const { return readout ? readout : dec; }
  std::size_t annotation_dim() const { return 2 * enc; }
  bool future_loss_on() const { return use_losses && use_future; }
  bool past_loss_on() const { return use_losses && use_past; }

  // Width of the decoder GRU input: E(y) ; c ; [s^F] ; [s^P].
  std::size_t decoder_input_dim() const {
    return emb + annotation_dim() + (use_future ? dec : 0) + (use_past ? dec : 0);
  }

  void validate() const {
    if (src_vocab <= static_cast<std::size_t>(kNumReserved) || tgt_vocab <= static_cast<std::size_t>(kNumReserved)) {
      throw ConfigError("vocabularies must hold at least one token beyond the 4 reserved ids");
    }
    if (emb == 0 || enc == 0 || dec == 0) throw ConfigError("model dimensions must be positive");
    if (use_losses && !use_future && !use_past) {
      throw ConfigError("use_losses requires the Future or Past layer");
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Model variants named after the ablation rows they reproduce.
inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "baseline",   "+frnn-gru", "+frnn-gru-o", "+frnn-gru-i",    "+frnn+loss",
      "+prnn",      "+prnn+loss", "+frnn+prnn", "+frnn+prnn+loss",
  };
  return names;
}

// Applies a preset's layer switches on top of the given dimensions.
inline ModelConfig apply_preset(ModelConfig cfg, const std::string& name) {
  cfg.use_future = cfg.use_past = cfg.use_losses = false;
  cfg.future_kind = FutureCellKind::GruI;
  if (name == "baseline") {
  } else if (name == "+frnn-gru") {
    cfg.use_future = true;
    cfg.future_kind = FutureCellKind::Gru;
  } else if (name == "+frnn-gru-o") {
    cfg.use_future = true;
    cfg.future_kind = FutureCellKind::GruO;
  } else if (name == "+frnn-gru-i") {
    cfg.use_future = true;
  } else if (name == "+frnn+loss") {
    cfg.use_future = cfg.use_losses = true;
  } else if (name == "+prnn") {
    cfg.use_past = true;
  } else if (name == "+prnn+loss") {
    cfg.use_past = cfg.use_losses = true;
  } else if (name == "+frnn+prnn") {
    cfg.use_future = cfg.use_past = true;
  } else if (name == "+frnn+prnn+loss") {
    cfg.use_future = cfg.use_past = cfg.use_losses = true;
  } else {
    throw ConfigError("unknown model preset '" + name + "'");
  }
  return cfg;
}

}  // namespace pfnmt
