#pragma once

#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfnmt/errors.hpp"
#include "pfnmt/model.hpp"
#include "pfnmt/model_config.hpp"
#include "pfnmt/optimizer.hpp"

namespace pfnmt {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"src_vocab", c.src_vocab},
          {"tgt_vocab", c.tgt_vocab},
          {"emb", c.emb},
          {"enc", c.enc},
          {"dec", c.dec},
          {"att", c.att},
          {"readout", c.readout},
          {"use_future", c.use_future},
          {"future_kind", to_string(c.future_kind)},
          {"use_past", c.use_past},
          {"use_losses", c.use_losses},
          {"feed_future_timing", to_string(c.feed_future_timing)},
          {"separate_future_init", c.separate_future_init},
          {"decoder_init", to_string(c.decoder_init)},
          {"future_init", to_string(c.future_init)},
          {"future_loss_weight", c.future_loss_weight},
          {"past_loss_weight", c.past_loss_weight}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.src_vocab = j.at("src_vocab").get<std::size_t>();
    c.tgt_vocab = j.at("tgt_vocab").get<std::size_t>();
    c.emb = j.at("emb").get<std::size_t>();
    c.enc = j.at("enc").get<std::size_t>();
    c.dec = j.at("dec").get<std::size_t>();
    c.att = j.at("att").get<std::size_t>();
    c.readout = j.at("readout").get<std::size_t>();
    c.use_future = j.at("use_future").get<bool>();
    c.future_kind = future_kind_from_string(j.at("future_kind").get<std::string>());
    c.use_past = j.at("use_past").get<bool>();
    c.use_losses = j.at("use_losses").get<bool>();
    c.feed_future_timing = feed_timing_from_string(j.at("feed_future_timing").get<std::string>());
    c.separate_future_init = j.at("separate_future_init").get<bool>();
    c.decoder_init = init_mode_from_string(j.at("decoder_init").get<std::string>());
    c.future_init = init_mode_from_string(j.at("future_init").get<std::string>());
    c.future_loss_weight = j.at("future_loss_weight").get<double>();
    c.past_loss_weight = j.at("past_loss_weight").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint model config is malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint model config is invalid: ") + e.what());
  }
}

// Bookkeeping stored next to the weights.
struct TrainProgress {
  std::size_t epoch = 0;
  double best_dev_nll = 0.0;
};

inline namespace PFNMT_PRECISION_NS {

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::optional<AdamState> adam;
  TrainProgress progress;
};

namespace detail {

inline nlohmann::json real_array(const std::vector<Real>& v) {
  std::vector<double> d(v.begin(), v.end());
  return d;
}

inline std::vector<Real> read_real_array(const nlohmann::json& j) {
  const auto d = j.get<std::vector<double>>();
  return {d.begin(), d.end()};
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline nlohmann::json read_checkpoint_json(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::from_cbor(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint " + path + " is not readable: " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "pfnmt-checkpoint") {
    throw CheckpointError(path + " is not a checkpoint file");
  }
  if (j.value("version", 0) != kCheckpointVersion) {
    throw CheckpointError(path + ": unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  }
  return j;
}

inline Tensor tensor_from_json(const std::string& name, const nlohmann::json& j) {
  try {
    const auto shape = j.at("shape").get<Shape>();
    return Tensor(shape, read_real_array(j.at("data")));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("parameter " + name + " is malformed: " + e.what());
  } catch (const DimensionError& e) {
    throw CheckpointError("parameter " + name + ": " + e.what());
  }
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params,
                            const AdamState* adam = nullptr, const TrainProgress& progress = {}) {
  nlohmann::json j;
  j["format"] = "pfnmt-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = model_config_to_json(cfg);
  nlohmann::json ps = nlohmann::json::object();
  params.visit([&](const std::string& name, const Tensor& t) {
    ps[name] = {{"shape", t.shape()}, {"data", detail::real_array(t.values())}};
  });
  j["params"] = std::move(ps);
  if (adam) {
    nlohmann::json a;
    a["lr"] = adam->lr;
    a["beta1"] = adam->beta1;
    a["beta2"] = adam->beta2;
    a["eps"] = adam->eps;
    a["t"] = adam->t;
    a["names"] = adam->names;
    nlohmann::json m = nlohmann::json::array(), v = nlohmann::json::array();
    for (std::size_t k = 0; k < adam->names.size(); ++k) {
      m.push_back(detail::real_array(adam->m[k]));
      v.push_back(detail::real_array(adam->v[k]));
    }
    a["m"] = std::move(m);
    a["v"] = std::move(v);
    j["adam"] = std::move(a);
  }
  j["progress"] = {{"epoch", progress.epoch}, {"best_dev_nll", progress.best_dev_nll}};

  const auto bytes = nlohmann::json::to_cbor(j);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("cannot move checkpoint into " + path);
}

// Loads a checkpoint, requiring exactly the parameter set its config implies
// with matching shapes.
inline Checkpoint load_checkpoint(const std::string& path) {
  const auto j = detail::read_checkpoint_json(path);
  Checkpoint c{model_config_from_json(j.at("config")), {}, std::nullopt, {}};
  try {
    c.params = ModelParams::zeros(c.config);
  } catch (const ConfigError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
  const auto& ps = j.at("params");
  std::size_t seen = 0;
  c.params.visit([&](const std::string& name, Tensor& t) {
    if (!ps.contains(name)) throw CheckpointError(path + ": missing parameter " + name);
    Tensor loaded = detail::tensor_from_json(name, ps.at(name));
    if (loaded.shape() != t.shape()) {
      throw CheckpointError(path + ": parameter " + name + " has shape " + shape_str(loaded.shape()) + ", expected " +
                            shape_str(t.shape()));
    }
    t = std::move(loaded);
    ++seen;
  });
  if (seen != ps.size()) throw CheckpointError(path + ": checkpoint holds parameters the config does not use");
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    AdamState s;
    s.lr = a.at("lr").get<double>();
    s.beta1 = a.at("beta1").get<double>();
    s.beta2 = a.at("beta2").get<double>();
    s.eps = a.at("eps").get<double>();
    s.t = a.at("t").get<std::uint64_t>();
    s.names = a.at("names").get<std::vector<std::string>>();
    for (std::size_t k = 0; k < s.names.size(); ++k) {
      s.m.push_back(detail::read_real_array(a.at("m").at(k)));
      s.v.push_back(detail::read_real_array(a.at("v").at(k)));
    }
    c.adam = std::move(s);
  }
  if (j.contains("progress")) {
    c.progress.epoch = j["progress"].value("epoch", std::size_t{0});
    c.progress.best_dev_nll = j["progress"].value("best_dev_nll", 0.0);
  }
  return c;
}

struct SharedLoadReport {
  std::size_t loaded = 0;
  std::size_t fresh = 0;
  std::size_t widened = 0;  // counted in loaded as well
  std::vector<std::string> fresh_names;
  std::vector<std::string> widened_names;
};

namespace detail {

// Decoder GRU input matrices gain columns when Future/Past states join the
// input; the baseline block [E(y); c] stays a column prefix.
inline bool widenable(const std::string& name) {
  return name == "decoder.cell.W" || name == "decoder.cell.W_r" || name == "decoder.cell.W_u";
}

inline void copy_column_prefix(const Tensor& src, Tensor& dst) {
  const std::size_t rows = src.shape()[0], sc = src.shape()[1], dc = dst.shape()[1];
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < sc; ++c) dst[r * dc + c] = src[r * sc + c];
}

}  // namespace detail

// Two-pass initialization: every parameter whose name exists in the source
// checkpoint is copied (shapes must agree, except that a decoder input matrix
// may be wider, in which case only its leading columns are copied); the rest
// keep their values.
inline SharedLoadReport load_shared_params(ModelParams& dst, const std::string& path) {
  const auto j = detail::read_checkpoint_json(path);
  const auto& ps = j.at("params");
  SharedLoadReport r;
  dst.visit([&](const std::string& name, Tensor& t) {
    if (!ps.contains(name)) {
      ++r.fresh;
      r.fresh_names.push_back(name);
      return;
    }
    Tensor loaded = detail::tensor_from_json(name, ps.at(name));
    if (loaded.shape() == t.shape()) {
      t = std::move(loaded);
    } else if (detail::widenable(name) && loaded.rank() == 2 && t.rank() == 2 &&
               loaded.shape()[0] == t.shape()[0] && loaded.shape()[1] < t.shape()[1]) {
      detail::copy_column_prefix(loaded, t);
      ++r.widened;
      r.widened_names.push_back(name);
    } else {
      throw CheckpointError(path + ": shared parameter " + name + " has shape " + shape_str(loaded.shape()) +
                            " but the model needs " + shape_str(t.shape()));
    }
    ++r.loaded;
  });
  return r;
}

}  // namespace PFNMT_PRECISION_NS
}  // namespace pfnmt
