#pragma once

// Token-sequence encoders producing one d_model vector per template.
//
// Three interchangeable implementations:
//   hash_deterministic   - fixed vectors derived from a hash of each word;
//                          numeric words additionally carry smooth features
//                          of their value. Frozen, identical everywhere.
//   randomly_initialized - i.i.d. Gaussian table drawn from the run seed,
//                          no structure over words. Frozen.
//   trainable_small      - learned table plus one self-attention layer;
//                          frozen unless EncoderSpec::trainable is set.
// Every encoder mean-pools over the token axis.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "archpred/autograd.hpp"
#include "archpred/language.hpp"
#include "archpred/random.hpp"

namespace archpred {

enum class EncoderKind { hash_deterministic, trainable_small, randomly_initialized };

inline std::string to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::hash_deterministic: return "hash_deterministic";
    case EncoderKind::trainable_small: return "trainable_small";
    case EncoderKind::randomly_initialized: return "randomly_initialized";
  }
  return "?";
}

inline EncoderKind parse_encoder_kind(const std::string& s) {
  if (s == "hash_deterministic" || s == "hash" || s == "pretrained") return EncoderKind::hash_deterministic;
  if (s == "trainable_small" || s == "trainable") return EncoderKind::trainable_small;
  if (s == "randomly_initialized" || s == "random-init" || s == "random") return EncoderKind::randomly_initialized;
  throw ContractError("unknown encoder kind '" + s + "'");
}

struct EncoderSpec {
  EncoderKind kind = EncoderKind::hash_deterministic;
  std::size_t d_model = 64;
  std::size_t max_seq_len = 16;
  /// Only meaningful for trainable_small: update the encoder during training.
  bool trainable = false;

  friend bool operator==(const EncoderSpec&, const EncoderSpec&) = default;
};

using EmbeddingVector = std::vector<double>;

namespace detail {

inline void fill_gaussian(std::span<double> out, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  for (double& v : out) v = scale * rng.normal();
}

constexpr std::uint64_t kHashSalt = 0x5EED0F1A6E5EEDULL;

}  // namespace detail

/// Fixed embedding of one word for the hash_deterministic encoder.
inline EmbeddingVector hash_word_embedding(const std::string& word, std::size_t d_model) {
  EmbeddingVector v(d_model);
  const auto number = parse_number_word(word);
  if (!number) {
    detail::fill_gaussian(v, fnv1a(word) ^ detail::kHashSalt);
    return v;
  }

  // Numeric words depend on their value only: a log-scale coordinate plus a
  // few sinusoids of it, each along its own fixed random direction.
  const double z = std::log2(1.0 + std::abs(*number));
  const double features[] = {z / 4.0,         std::sin(2.0 * z), std::cos(2.0 * z), std::sin(z),
                             std::cos(z),     std::sin(0.5 * z), std::cos(0.5 * z), std::sin(0.25 * z),
                             std::cos(0.25 * z)};
  EmbeddingVector dir(d_model);
  for (std::size_t k = 0; k < std::size(features); ++k) {
    detail::fill_gaussian(dir, fnv1a("<num#" + std::to_string(k) + ">") ^ detail::kHashSalt);
    for (std::size_t i = 0; i < d_model; ++i) v[i] += features[k] * dir[i];
  }
  return v;
}

/// Encoder parameters are registered in the model's ParamStore under the
/// "encoder." prefix; hash_deterministic has none.
class Encoder {
 public:
  Encoder() = default;
  Encoder(EncoderSpec spec, std::shared_ptr<const Vocabulary> vocab) : spec_(spec), vocab_(std::move(vocab)) {
    if (spec_.d_model == 0) throw ContractError("encoder d_model must be positive");
    if (!vocab_) throw ContractError("encoder needs a vocabulary");
  }
  Encoder(EncoderSpec spec, const Vocabulary& vocab) : Encoder(spec, std::make_shared<const Vocabulary>(vocab)) {}

  const EncoderSpec& spec() const { return spec_; }
  const Vocabulary& vocabulary() const { return *vocab_; }

  /// Whether gradients flow into encoder parameters.
  bool trainable() const { return spec_.kind == EncoderKind::trainable_small && spec_.trainable; }

  void register_params(ParamStore& store, Rng& rng) {
    const std::size_t d = spec_.d_model;
    const std::size_t v = vocab_->size();
    auto gaussian = [&](std::size_t r, std::size_t c, double s) {
      Tensor t = Tensor::zeros(r, c);
      for (double& x : t.data()) x = s * rng.normal();
      return t;
    };
    switch (spec_.kind) {
      case EncoderKind::hash_deterministic:
        break;
      case EncoderKind::randomly_initialized:
        table_ = store.add("encoder.table", gaussian(v, d, 1.0), false);
        break;
      case EncoderKind::trainable_small: {
        const bool t = spec_.trainable;
        const double s = 1.0 / std::sqrt(double(d));
        table_ = store.add("encoder.table", gaussian(v, d, 1.0), t);
        wq_ = store.add("encoder.attn.wq", gaussian(d, d, s), t);
        wk_ = store.add("encoder.attn.wk", gaussian(d, d, s), t);
        wv_ = store.add("encoder.attn.wv", gaussian(d, d, s), t);
        wo_ = store.add("encoder.attn.wo", gaussian(d, d, 0.5 * s), t);
        break;
      }
    }
  }

  /// Looks up previously registered parameters (after a checkpoint load).
  void bind_params(const ParamStore& store) {
    if (spec_.kind == EncoderKind::hash_deterministic) return;
    table_ = store.index("encoder.table");
    if (store[table_].value.rows() != vocab_->size() || store[table_].value.cols() != spec_.d_model) {
      throw FormatError("encoder table shape does not match vocabulary/d_model");
    }
    if (spec_.kind == EncoderKind::trainable_small) {
      wq_ = store.index("encoder.attn.wq");
      wk_ = store.index("encoder.attn.wk");
      wv_ = store.index("encoder.attn.wv");
      wo_ = store.index("encoder.attn.wo");
    }
  }

  /// Encodes one sequence as a 1 x d_model row on the tape.
  Var encode(Tape& tape, const TokenSequence& seq, const ParamStore& store) const {
    if (seq.ids.empty()) throw ContractError("cannot encode an empty token sequence");
    const std::size_t k = seq.ids.size();
    const std::size_t d = spec_.d_model;
    switch (spec_.kind) {
      case EncoderKind::hash_deterministic: {
        Tensor rows = Tensor::zeros(k, d);
        for (std::size_t i = 0; i < k; ++i) {
          const std::string& w = i < seq.words.size() ? seq.words[i] : vocab_->word(seq.ids[i]);
          const EmbeddingVector e = hash_word_embedding(w, d);
          std::copy(e.begin(), e.end(), rows.row(i).begin());
        }
        return ad::mean_rows(tape.constant(std::move(rows)), 0, k);
      }
      case EncoderKind::randomly_initialized: {
        Var x = ad::gather_rows(tape.param(store, table_), seq.ids);
        return ad::mean_rows(x, 0, k);
      }
      case EncoderKind::trainable_small: {
        Var x = ad::gather_rows(tape.param(store, table_), seq.ids);
        Var q = ad::matmul(x, tape.param(store, wq_));
        Var kk = ad::matmul(x, tape.param(store, wk_));
        Var v = ad::matmul(x, tape.param(store, wv_));
        Var att = ad::row_softmax(ad::scale(ad::matmul_nt(q, kk), 1.0 / std::sqrt(double(d))));
        Var y = ad::add(x, ad::matmul(ad::matmul(att, v), tape.param(store, wo_)));
        return ad::mean_rows(y, 0, k);
      }
    }
    throw ContractError("unreachable encoder kind");
  }

  EmbeddingVector encode(const TokenSequence& seq, const ParamStore& store) const {
    Tape tape;
    const Tensor& row = encode(tape, seq, store).value();
    return EmbeddingVector(row.data().begin(), row.data().end());
  }

 private:
  EncoderSpec spec_;
  std::shared_ptr<const Vocabulary> vocab_;
  std::size_t table_ = 0, wq_ = 0, wk_ = 0, wv_ = 0, wo_ = 0;
};

/// Same as Encoder::encode for the parameter-free hash encoder.
inline EmbeddingVector encode(const TokenSequence& seq, const Vocabulary& vocab, const EncoderSpec& spec) {
  if (spec.kind != EncoderKind::hash_deterministic) {
    throw ContractError("parameterised encoders need a parameter store");
  }
  Encoder enc(spec, vocab);
  return enc.encode(seq, ParamStore{});
}

/// [f_node_1 ... f_node_n, f_plat] as an (n+1) x d_model matrix, node rows in
/// topological order, all rows produced by the same encoder.
inline Var embed_graph(Tape& tape, const ArchGraph& g, const PlatformRecord& p, const Encoder& enc,
                       const ParamStore& store) {
  std::vector<Var> rows;
  rows.reserve(g.size() + 1);
  const std::size_t max_len = enc.spec().max_seq_len;
  for (const auto& node : g.nodes()) {
    rows.push_back(enc.encode(tape, tokenize(render_node_template(node), enc.vocabulary(), max_len), store));
  }
  rows.push_back(enc.encode(tape, tokenize(render_platform_template(p), enc.vocabulary(), max_len), store));
  return ad::concat_rows(rows);
}

inline Tensor embed_graph(const ArchGraph& g, const PlatformRecord& p, const Encoder& enc, const ParamStore& store) {
  Tape tape;
  return embed_graph(tape, g, p, enc, store).value();
}

}  // namespace archpred
