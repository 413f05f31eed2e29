#pragma once

// Dynamic graph self-attention.
//
// Each layer runs three attention branches over the same Q/K/V projections,
// masked by the grandfather, father and son neighbourhoods (each plus the
// identity), and mixes them per node with a softmax gate. The gate of node i
// is computed from causal attention over rows 0..i of the layer input.

#include <array>
#include <cmath>
#include <string>

#include "archpred/autograd.hpp"
#include "archpred/graph.hpp"
#include "archpred/random.hpp"

namespace archpred {

enum class GateMode { dynamic, uniform_fixed, disabled_full_attention };
enum class MaskMode { hadamard, additive_neg_inf };

inline std::string to_string(GateMode m) {
  switch (m) {
    case GateMode::dynamic: return "dynamic";
    case GateMode::uniform_fixed: return "uniform_fixed";
    case GateMode::disabled_full_attention: return "disabled_full_attention";
  }
  return "?";
}

inline GateMode parse_gate_mode(const std::string& s) {
  if (s == "dynamic") return GateMode::dynamic;
  if (s == "uniform_fixed" || s == "uniform") return GateMode::uniform_fixed;
  if (s == "disabled_full_attention" || s == "full") return GateMode::disabled_full_attention;
  throw ContractError("unknown gate mode '" + s + "'");
}

inline std::string to_string(MaskMode m) { return m == MaskMode::hadamard ? "hadamard" : "additive_neg_inf"; }

inline MaskMode parse_mask_mode(const std::string& s) {
  if (s == "hadamard") return MaskMode::hadamard;
  if (s == "additive_neg_inf" || s == "additive") return MaskMode::additive_neg_inf;
  throw ContractError("unknown mask mode '" + s + "'");
}

struct DgsaConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  GateMode gate_mode = GateMode::dynamic;
  MaskMode mask_mode = MaskMode::hadamard;
  /// Divide the gate's prefix-attention scores by sqrt(d_model).
  bool scale_gate_scores = false;
  std::size_t ffn_multiplier = 4;

  std::size_t head_dim() const { return d_model / n_heads; }

  void validate() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
      throw ContractError("d_model (" + std::to_string(d_model) + ") must be a positive multiple of n_heads (" +
                          std::to_string(n_heads) + ")");
    }
    if (ffn_multiplier == 0) throw ContractError("ffn_multiplier must be positive");
  }

  friend bool operator==(const DgsaConfig&, const DgsaConfig&) = default;
};

/// Parameter slots of one layer inside a ParamStore.
struct DgsaLayerParams {
  std::size_t ln1_gain, ln1_bias;
  std::size_t w_q, w_k, w_v;
  std::size_t dw_q, dw_k, dw_v;
  std::size_t gate_w1, gate_b1, gate_w2, gate_b2;
  std::size_t out_w, out_b;
  std::size_t ln2_gain, ln2_bias;
  std::size_t ffn_w1, ffn_b1, ffn_w2, ffn_b2;

  /// Registers a freshly initialised layer. The gate's output layer starts
  /// at zero, so every node starts with gate (1/3, 1/3, 1/3).
  static DgsaLayerParams create(ParamStore& store, const std::string& prefix, const DgsaConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t d = cfg.d_model;
    const std::size_t f = cfg.ffn_multiplier * d;
    auto gaussian = [&](std::size_t r, std::size_t c, double s) {
      Tensor t = Tensor::zeros(r, c);
      for (double& x : t.data()) x = s * rng.normal();
      return t;
    };
    const double sd = 1.0 / std::sqrt(double(d));
    const double residual = 1.0 / std::sqrt(2.0 * double(cfg.n_layers));
    DgsaLayerParams p{};
    p.ln1_gain = store.add(prefix + "ln1.gain", Tensor::filled(1, d, 1.0));
    p.ln1_bias = store.add(prefix + "ln1.bias", Tensor::zeros(1, d));
    p.w_q = store.add(prefix + "attn.wq", gaussian(d, d, sd));
    p.w_k = store.add(prefix + "attn.wk", gaussian(d, d, sd));
    p.w_v = store.add(prefix + "attn.wv", gaussian(d, d, sd));
    p.dw_q = store.add(prefix + "gate.dw_q", gaussian(d, d, sd));
    p.dw_k = store.add(prefix + "gate.dw_k", gaussian(d, d, sd));
    p.dw_v = store.add(prefix + "gate.dw_v", gaussian(d, d, sd));
    p.gate_w1 = store.add(prefix + "gate.w1", gaussian(d, d, sd));
    p.gate_b1 = store.add(prefix + "gate.b1", Tensor::zeros(1, d));
    p.gate_w2 = store.add(prefix + "gate.w2", Tensor::zeros(d, 3));
    p.gate_b2 = store.add(prefix + "gate.b2", Tensor::zeros(1, 3));
    p.out_w = store.add(prefix + "attn.out_w", gaussian(d, d, sd * residual));
    p.out_b = store.add(prefix + "attn.out_b", Tensor::zeros(1, d));
    p.ln2_gain = store.add(prefix + "ln2.gain", Tensor::filled(1, d, 1.0));
    p.ln2_bias = store.add(prefix + "ln2.bias", Tensor::zeros(1, d));
    p.ffn_w1 = store.add(prefix + "ffn.w1", gaussian(d, f, sd));
    p.ffn_b1 = store.add(prefix + "ffn.b1", Tensor::zeros(1, f));
    p.ffn_w2 = store.add(prefix + "ffn.w2", gaussian(f, d, residual / std::sqrt(double(f))));
    p.ffn_b2 = store.add(prefix + "ffn.b2", Tensor::zeros(1, d));
    return p;
  }

  static DgsaLayerParams bind(const ParamStore& store, const std::string& prefix, const DgsaConfig& cfg) {
    DgsaLayerParams p{};
    const std::size_t d = cfg.d_model;
    const std::size_t f = cfg.ffn_multiplier * d;
    auto slot = [&](const std::string& name, std::size_t r, std::size_t c) {
      const std::size_t i = store.index(prefix + name);
      if (store[i].value.shape() != Shape{r, c}) {
        throw FormatError("parameter " + prefix + name + " has shape " + shape_string(store[i].value.shape()) +
                          ", config expects " + shape_string({r, c}));
      }
      return i;
    };
    p.ln1_gain = slot("ln1.gain", 1, d);
    p.ln1_bias = slot("ln1.bias", 1, d);
    p.w_q = slot("attn.wq", d, d);
    p.w_k = slot("attn.wk", d, d);
    p.w_v = slot("attn.wv", d, d);
    p.dw_q = slot("gate.dw_q", d, d);
    p.dw_k = slot("gate.dw_k", d, d);
    p.dw_v = slot("gate.dw_v", d, d);
    p.gate_w1 = slot("gate.w1", d, d);
    p.gate_b1 = slot("gate.b1", 1, d);
    p.gate_w2 = slot("gate.w2", d, 3);
    p.gate_b2 = slot("gate.b2", 1, 3);
    p.out_w = slot("attn.out_w", d, d);
    p.out_b = slot("attn.out_b", 1, d);
    p.ln2_gain = slot("ln2.gain", 1, d);
    p.ln2_bias = slot("ln2.bias", 1, d);
    p.ffn_w1 = slot("ffn.w1", d, f);
    p.ffn_b1 = slot("ffn.b1", 1, f);
    p.ffn_w2 = slot("ffn.w2", f, d);
    p.ffn_b2 = slot("ffn.b2", 1, d);
    return p;
  }
};

/// Branch masks over the n graph nodes plus the platform row (index n).
/// Order: grandfather, father, son.
struct BranchMasks {
  std::array<Tensor, 3> masks;

  std::size_t size() const { return masks[0].rows(); }

  /// All-ones masks of the given size (full attention).
  static BranchMasks full(std::size_t n_rows) {
    BranchMasks b;
    for (auto& m : b.masks) m = Tensor::filled(n_rows, n_rows, 1.0);
    return b;
  }
};

/// Extends the graph masks by one row/column for the platform token; that
/// row and column are all ones in every branch.
inline BranchMasks extend_masks(const AdjacencyMasks& m) {
  const std::size_t n = m.son.rows();
  BranchMasks b;
  const Tensor* src[3] = {&m.grandfather, &m.father, &m.son};
  for (std::size_t k = 0; k < 3; ++k) {
    Tensor e = Tensor::zeros(n + 1, n + 1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) e(i, j) = (*src[k])(i, j);
    for (std::size_t i = 0; i <= n; ++i) {
      e(i, n) = 1.0;
      e(n, i) = 1.0;
    }
    b.masks[k] = std::move(e);
  }
  return b;
}

/// Multi-head attention of projected q/k/v under one binary mask.
///
/// hadamard:         softmax((QK^T o (I + M)) / sqrt(h)) V. Positions where
///                   I + M is zero enter the softmax as logit 0.
/// additive_neg_inf: positions where I + M is zero get zero weight.
inline Var masked_attention(Var q, Var k, Var v, const Tensor& mask, const DgsaConfig& cfg) {
  const std::size_t n = q.rows();
  if (mask.rank() != 2 || mask.rows() != n || mask.cols() != n || k.rows() != n || v.rows() != n) {
    throw DimensionError("masked_attention: mask " + shape_string(mask.shape()) + " for " + std::to_string(n) +
                         " rows");
  }
  if (q.cols() != cfg.d_model || k.cols() != cfg.d_model || v.cols() != cfg.d_model) {
    throw DimensionError("masked_attention: projections must be d_model wide");
  }
  Tensor factor = mask;
  for (std::size_t i = 0; i < n; ++i) factor(i, i) += 1.0;

  const std::size_t h = cfg.head_dim();
  const double inv_sqrt_h = 1.0 / std::sqrt(double(h));
  std::vector<Var> heads;
  heads.reserve(cfg.n_heads);
  for (std::size_t head = 0; head < cfg.n_heads; ++head) {
    Var qh = cfg.n_heads == 1 ? q : ad::slice_cols(q, head * h, h);
    Var kh = cfg.n_heads == 1 ? k : ad::slice_cols(k, head * h, h);
    Var vh = cfg.n_heads == 1 ? v : ad::slice_cols(v, head * h, h);
    Var scores = ad::matmul_nt(qh, kh);
    Var weights;
    if (cfg.mask_mode == MaskMode::hadamard) {
      weights = ad::row_softmax(ad::scale(ad::mul_const(scores, factor), inv_sqrt_h));
    } else {
      weights = ad::masked_row_softmax(ad::scale(scores, inv_sqrt_h), factor);
    }
    heads.push_back(ad::matmul(weights, vh));
  }
  return heads.size() == 1 ? heads.front() : ad::concat_cols(heads);
}

/// Projects F with the layer's W_Q/W_K/W_V and attends under `mask`.
inline Var masked_attention(Var F, const Tensor& mask, const DgsaLayerParams& p, const ParamStore& store,
                            const DgsaConfig& cfg) {
  Tape& t = F.tape();
  Var q = ad::matmul(F, t.param(store, p.w_q));
  Var k = ad::matmul(F, t.param(store, p.w_k));
  Var v = ad::matmul(F, t.param(store, p.w_v));
  return masked_attention(q, k, v, mask, cfg);
}

struct DynamicWeights {
  Var features;  // n' x d_model, gate features from prefix attention
  Var weights;   // n' x 3, one softmax row per node
};

/// Per-node branch weights. Row i attends causally over rows 0..i with the
/// gate's own projections; a hidden-layer MLP maps the result to 3 logits.
inline DynamicWeights dynamic_gate(Var F, const DgsaLayerParams& p, const ParamStore& store, const DgsaConfig& cfg) {
  const std::size_t n = F.rows();
  if (n == 0) throw ContractError("dynamic_gate on empty input");
  Tape& t = F.tape();
  Var q = ad::matmul(F, t.param(store, p.dw_q));
  Var k = ad::matmul(F, t.param(store, p.dw_k));
  Var v = ad::matmul(F, t.param(store, p.dw_v));
  Var scores = ad::matmul_nt(q, k);
  if (cfg.scale_gate_scores) scores = ad::scale(scores, 1.0 / std::sqrt(double(cfg.d_model)));
  Tensor causal = Tensor::zeros(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) causal(i, j) = 1.0;
  Var features = ad::matmul(ad::masked_row_softmax(scores, causal), v);

  Var hidden = ad::gelu(ad::add_row(ad::matmul(features, t.param(store, p.gate_w1)), t.param(store, p.gate_b1)));
  Var logits = ad::add_row(ad::matmul(hidden, t.param(store, p.gate_w2)), t.param(store, p.gate_b2));
  return {features, ad::row_softmax(logits)};
}

/// X_1, X_2, X_3: attention under the grandfather, father and son masks,
/// sharing one set of Q/K/V projections.
inline std::array<Var, 3> branch_outputs(Var F, const BranchMasks& masks, const DgsaLayerParams& p,
                                         const ParamStore& store, const DgsaConfig& cfg) {
  if (masks.size() != F.rows()) {
    throw DimensionError("branch masks cover " + std::to_string(masks.size()) + " rows, input has " +
                         std::to_string(F.rows()));
  }
  Tape& t = F.tape();
  Var q = ad::matmul(F, t.param(store, p.w_q));
  Var k = ad::matmul(F, t.param(store, p.w_k));
  Var v = ad::matmul(F, t.param(store, p.w_v));
  return {masked_attention(q, k, v, masks.masks[0], cfg), masked_attention(q, k, v, masks.masks[1], cfg),
          masked_attention(q, k, v, masks.masks[2], cfg)};
}

/// Row-wise convex combination sum_b w(:, b) * X_b.
inline Var combine_branches(const std::array<Var, 3>& branches, Var weights) {
  if (weights.cols() != 3 || weights.rows() != branches[0].rows()) throw DimensionError("gate weights must be n x 3");
  Var out = ad::mul_col(branches[0], ad::slice_cols(weights, 0, 1));
  out = ad::add(out, ad::mul_col(branches[1], ad::slice_cols(weights, 1, 1)));
  return ad::add(out, ad::mul_col(branches[2], ad::slice_cols(weights, 2, 1)));
}

inline Var uniform_weights(Tape& tape, std::size_t n) { return tape.constant(Tensor::filled(n, 3, 1.0 / 3.0)); }

/// Gated mixture of the three masked branches, before the output projection.
inline Var dgsa_forward(Var F, const BranchMasks& masks, const DgsaLayerParams& p, const ParamStore& store,
                        const DgsaConfig& cfg) {
  switch (cfg.gate_mode) {
    case GateMode::disabled_full_attention:
      // Three identical all-ones branches; any convex gate returns the same.
      return masked_attention(F, Tensor::filled(F.rows(), F.rows(), 1.0), p, store, cfg);
    case GateMode::uniform_fixed:
      return combine_branches(branch_outputs(F, masks, p, store, cfg), uniform_weights(F.tape(), F.rows()));
    case GateMode::dynamic:
      break;
  }
  DynamicWeights gate = dynamic_gate(F, p, store, cfg);
  return combine_branches(branch_outputs(F, masks, p, store, cfg), gate.weights);
}

/// Pre-norm residual block:
///   F'  = F  + (dgsa(LN(F)) W_o + b_o)
///   F'' = F' + FFN(LN(F'))
inline Var transformer_block(Var F, const BranchMasks& masks, const DgsaLayerParams& p, const ParamStore& store,
                             const DgsaConfig& cfg) {
  Tape& t = F.tape();
  Var h = ad::layer_norm(F, t.param(store, p.ln1_gain), t.param(store, p.ln1_bias));
  Var attn = dgsa_forward(h, masks, p, store, cfg);
  Var f1 = ad::add(F, ad::add_row(ad::matmul(attn, t.param(store, p.out_w)), t.param(store, p.out_b)));

  Var h2 = ad::layer_norm(f1, t.param(store, p.ln2_gain), t.param(store, p.ln2_bias));
  Var inner = ad::gelu(ad::add_row(ad::matmul(h2, t.param(store, p.ffn_w1)), t.param(store, p.ffn_b1)));
  Var ffn = ad::add_row(ad::matmul(inner, t.param(store, p.ffn_w2)), t.param(store, p.ffn_b2));
  return ad::add(f1, ffn);
}

}  // namespace archpred
