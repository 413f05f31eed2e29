#pragma once

// Full predictor: language embedding -> DGSA transformer stack -> mean
// readout over architecture rows -> concat with the raw platform embedding
// -> one-hidden-layer head. For latency the head emits log-latency.

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "archpred/autograd.hpp"
#include "archpred/dgsa.hpp"
#include "archpred/encoder.hpp"
#include "archpred/graph.hpp"
#include "archpred/language.hpp"
#include "archpred/random.hpp"

namespace archpred {

enum class TaskKind { latency, accuracy };

inline std::string to_string(TaskKind t) { return t == TaskKind::latency ? "latency" : "accuracy"; }

inline TaskKind parse_task(const std::string& s) {
  if (s == "latency") return TaskKind::latency;
  if (s == "accuracy") return TaskKind::accuracy;
  throw ContractError("unknown task '" + s + "'");
}

struct PredictionTarget {
  TaskKind kind = TaskKind::latency;
  double value = 0.0;
};

inline void validate_target(const PredictionTarget& t) {
  if (t.kind == TaskKind::latency && !(t.value > 0.0)) {
    throw ContractError("latency target must be positive, got " + format_number(t.value));
  }
  if (t.kind == TaskKind::accuracy && !(t.value >= 0.0 && t.value <= 1.0)) {
    throw ContractError("accuracy target must lie in [0, 1], got " + format_number(t.value));
  }
}

struct ModelConfig {
  TaskKind task = TaskKind::latency;
  DgsaConfig dgsa;
  EncoderSpec encoder;
  std::size_t head_hidden = 64;

  void validate() const {
    dgsa.validate();
    if (encoder.d_model != dgsa.d_model) throw ContractError("encoder and DGSA d_model differ");
    if (head_hidden == 0) throw ContractError("head_hidden must be positive");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"task", to_string(c.task)},
          {"dgsa",
           {{"d_model", c.dgsa.d_model},
            {"n_heads", c.dgsa.n_heads},
            {"n_layers", c.dgsa.n_layers},
            {"gate_mode", to_string(c.dgsa.gate_mode)},
            {"mask_mode", to_string(c.dgsa.mask_mode)},
            {"scale_gate_scores", c.dgsa.scale_gate_scores},
            {"ffn_multiplier", c.dgsa.ffn_multiplier}}},
          {"encoder",
           {{"kind", to_string(c.encoder.kind)},
            {"d_model", c.encoder.d_model},
            {"max_seq_len", c.encoder.max_seq_len},
            {"trainable", c.encoder.trainable}}},
          {"head_hidden", c.head_hidden}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.task = parse_task(j.at("task").get<std::string>());
  const auto& d = j.at("dgsa");
  c.dgsa.d_model = d.at("d_model").get<std::size_t>();
  c.dgsa.n_heads = d.at("n_heads").get<std::size_t>();
  c.dgsa.n_layers = d.at("n_layers").get<std::size_t>();
  c.dgsa.gate_mode = parse_gate_mode(d.at("gate_mode").get<std::string>());
  c.dgsa.mask_mode = parse_mask_mode(d.at("mask_mode").get<std::string>());
  c.dgsa.scale_gate_scores = d.at("scale_gate_scores").get<bool>();
  c.dgsa.ffn_multiplier = d.at("ffn_multiplier").get<std::size_t>();
  const auto& e = j.at("encoder");
  c.encoder.kind = parse_encoder_kind(e.at("kind").get<std::string>());
  c.encoder.d_model = e.at("d_model").get<std::size_t>();
  c.encoder.max_seq_len = e.at("max_seq_len").get<std::size_t>();
  c.encoder.trainable = e.at("trainable").get<bool>();
  c.head_hidden = j.at("head_hidden").get<std::size_t>();
  return c;
}

/// Everything about one sample that does not depend on trainable weights.
struct PreparedSample {
  std::size_t n_nodes = 0;
  BranchMasks masks;
  /// (n+1) x d language embedding; empty when the encoder is trainable.
  Tensor embedding;
};

class Model {
 public:
  /// Fresh parameters drawn from `seed`.
  static Model create(const ModelConfig& cfg, Vocabulary vocab, std::uint64_t seed) {
    cfg.validate();
    Model m(cfg, std::move(vocab));
    Rng rng(seed);
    m.encoder_.register_params(m.params_, rng);
    for (std::size_t l = 0; l < cfg.dgsa.n_layers; ++l) {
      m.layers_.push_back(DgsaLayerParams::create(m.params_, layer_prefix(l), cfg.dgsa, rng));
    }
    const std::size_t d = cfg.dgsa.d_model;
    const std::size_t hh = cfg.head_hidden;
    Tensor w1 = Tensor::zeros(2 * d, hh);
    for (double& x : w1.data()) x = rng.normal() / std::sqrt(double(2 * d));
    m.head_w1_ = m.params_.add("head.w1", std::move(w1));
    m.head_b1_ = m.params_.add("head.b1", Tensor::zeros(1, hh));
    m.head_w2_ = m.params_.add("head.w2", Tensor::zeros(hh, 1));
    m.head_b2_ = m.params_.add("head.b2", Tensor::zeros(1, 1));
    return m;
  }

  /// Rebuilds a model around existing parameters (checkpoint load).
  static Model from_parts(const ModelConfig& cfg, Vocabulary vocab, ParamStore params) {
    cfg.validate();
    Model m(cfg, std::move(vocab));
    m.params_ = std::move(params);
    m.encoder_.bind_params(m.params_);
    for (std::size_t l = 0; l < cfg.dgsa.n_layers; ++l) {
      m.layers_.push_back(DgsaLayerParams::bind(m.params_, layer_prefix(l), cfg.dgsa));
    }
    const std::size_t d = cfg.dgsa.d_model;
    auto slot = [&](const std::string& name, Shape shape) {
      const std::size_t i = m.params_.index(name);
      if (m.params_[i].value.shape() != shape) throw FormatError("parameter " + name + " has unexpected shape");
      return i;
    };
    m.head_w1_ = slot("head.w1", {2 * d, cfg.head_hidden});
    m.head_b1_ = slot("head.b1", {1, cfg.head_hidden});
    m.head_w2_ = slot("head.w2", {cfg.head_hidden, 1});
    m.head_b2_ = slot("head.b2", {1, 1});
    return m;
  }

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocabulary() const { return *vocab_; }
  const Encoder& encoder() const { return encoder_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const std::vector<DgsaLayerParams>& layers() const { return layers_; }
  std::size_t head_output_weight_slot() const { return head_w2_; }
  std::size_t head_output_bias_slot() const { return head_b2_; }

  void set_head_bias(double b) { params_[head_b2_].value[0] = b; }

  PreparedSample prepare(const ArchGraph& g, const PlatformRecord& p) const {
    PreparedSample s;
    s.n_nodes = g.size();
    s.masks = cfg_.dgsa.gate_mode == GateMode::disabled_full_attention ? BranchMasks::full(g.size() + 1)
                                                                      : extend_masks(derive_masks(g));
    if (!encoder_.trainable()) s.embedding = embed_graph(g, p, encoder_, params_);
    return s;
  }

  Var embed(Tape& tape, const ArchGraph& g, const PlatformRecord& p) const {
    return embed_graph(tape, g, p, encoder_, params_);
  }

  /// Head output on the tape: log-latency (latency task) or accuracy.
  Var forward(Tape& tape, const PreparedSample& s, const ArchGraph& g, const PlatformRecord& p) const {
    Var f0 = encoder_.trainable() ? embed(tape, g, p) : tape.constant(s.embedding);
    return forward_from_embedding(f0, s.masks, s.n_nodes);
  }

  Var forward(Tape& tape, const ArchGraph& g, const PlatformRecord& p) const {
    return forward(tape, prepare(g, p), g, p);
  }

  /// Runs the DGSA stack and head on an explicit embedding matrix whose
  /// last row is the platform embedding.
  Var forward_from_embedding(Var f0, const BranchMasks& masks, std::size_t n_nodes) const {
    Tape& tape = f0.tape();
    if (f0.rows() != n_nodes + 1) throw DimensionError("embedding must have n + 1 rows");
    Var f = f0;
    for (const auto& layer : layers_) f = transformer_block(f, masks, layer, params_, cfg_.dgsa);
    Var rep = readout(f, n_nodes);
    Var plat = ad::slice_rows(f0, n_nodes, 1);
    Var x = ad::concat_cols({rep, plat});
    Var h = ad::gelu(ad::add_row(ad::matmul(x, tape.param(params_, head_w1_)), tape.param(params_, head_b1_)));
    return ad::add_row(ad::matmul(h, tape.param(params_, head_w2_)), tape.param(params_, head_b2_));
  }

  /// Mean over the n architecture rows; the platform row is excluded.
  static Var readout(Var f_final, std::size_t n_nodes) {
    if (n_nodes == 0) throw ContractError("readout needs at least one architecture row");
    return ad::mean_rows(f_final, 0, n_nodes);
  }

  /// Maps a head output to the predicted attribute.
  double to_prediction(double head) const { return cfg_.task == TaskKind::latency ? std::exp(head) : head; }

  double predict(const PreparedSample& s, const ArchGraph& g, const PlatformRecord& p) const {
    Tape tape;
    return to_prediction(forward(tape, s, g, p).value().item());
  }

  double predict(const ArchGraph& g, const PlatformRecord& p) const { return predict(prepare(g, p), g, p); }

  static std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l) + "."; }

 private:
  Model(const ModelConfig& cfg, Vocabulary vocab)
      : cfg_(cfg), vocab_(std::make_shared<const Vocabulary>(std::move(vocab))), encoder_(cfg.encoder, vocab_) {}

  ModelConfig cfg_;
  std::shared_ptr<const Vocabulary> vocab_;
  Encoder encoder_;
  ParamStore params_;
  std::vector<DgsaLayerParams> layers_;
  std::size_t head_w1_ = 0, head_b1_ = 0, head_w2_ = 0, head_b2_ = 0;
};

/// Latency: squared error in log space. Accuracy: squared error.
inline double loss(double prediction, const PredictionTarget& target) {
  validate_target(target);
  if (target.kind == TaskKind::latency) {
    if (!(prediction > 0.0)) throw ContractError("latency prediction must be positive");
    const double e = std::log(prediction) - std::log(target.value);
    return e * e;
  }
  const double e = prediction - target.value;
  return e * e;
}

/// Same loss on the tape, taking the raw head output (log-latency for the
/// latency task).
inline Var loss(Var head_output, const PredictionTarget& target) {
  validate_target(target);
  const double goal = target.kind == TaskKind::latency ? std::log(target.value) : target.value;
  Var err = ad::add_scalar(head_output, -goal);
  return ad::mul(err, err);
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr const char* kCheckpointFormat = "archpred-checkpoint";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline std::string checksum_hex(const ParamStore& params) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& p : params) {
    h = fnv1a(p.name, h);
    for (double v : p.value.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xFF;
        h *= 0x100000001B3ULL;
      }
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Writes through a temporary file and renames, so readers never see a
/// partial file.
inline void write_atomically(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << contents;
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

}  // namespace detail

inline nlohmann::json checkpoint_json(const Model& model) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = to_json(model.config());
  j["vocabulary"] = model.vocabulary().words();
  j["parameters"] = nlohmann::json::array();
  for (const auto& p : model.params()) {
    j["parameters"].push_back(
        {{"name", p.name}, {"shape", p.value.shape()}, {"trainable", p.trainable}, {"data", p.value.storage()}});
  }
  j["checksum"] = detail::checksum_hex(model.params());
  return j;
}

inline void save_checkpoint(const Model& model, const std::string& path) {
  detail::write_atomically(path, checkpoint_json(model).dump());
}

/// Loads a checkpoint. When `expected` is given, its architecture fields
/// (sizes, modes, encoder) must match the stored config.
inline Model load_checkpoint(const std::string& path, const ModelConfig* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::stringstream buf;
  buf << in.rdbuf();

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw IntegrityError("checkpoint " + path + " is corrupt: " + e.what());
  }
  try {
    if (j.value("format", std::string{}) != kCheckpointFormat) throw FormatError(path + " is not a checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw FormatError("checkpoint version " + j.at("version").dump() + " unsupported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    }
    const ModelConfig cfg = model_config_from_json(j.at("config"));
    if (expected && !(*expected == cfg)) {
      throw FormatError("checkpoint config " + to_json(cfg).dump() + " does not match requested " +
                        to_json(*expected).dump());
    }
    Vocabulary vocab = Vocabulary::from_words(j.at("vocabulary").get<std::vector<std::string>>());
    ParamStore params;
    for (const auto& jp : j.at("parameters")) {
      params.add(jp.at("name").get<std::string>(),
                 Tensor(jp.at("shape").get<Shape>(), jp.at("data").get<std::vector<double>>()),
                 jp.at("trainable").get<bool>());
    }
    if (detail::checksum_hex(params) != j.at("checksum").get<std::string>()) {
      throw IntegrityError("checkpoint " + path + " failed its checksum");
    }
    return Model::from_parts(cfg, std::move(vocab), std::move(params));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("checkpoint " + path + " is malformed: " + e.what());
  } catch (const KeyError& e) {
    throw FormatError(std::string("checkpoint does not match its config: ") + e.what());
  } catch (const DimensionError& e) {
    throw IntegrityError(std::string("checkpoint tensor is malformed: ") + e.what());
  }
}

}  // namespace archpred
