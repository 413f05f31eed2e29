#pragma once

// Synthetic latency oracle and architecture-family generators.
//
// latency(g, p) = platform_factor(p) * sum_nodes cost(op, attrs) * noise
//   platform_factor(p) = reference_tflops / p.throughput * precision multiplier
//   noise               = exp(sigma * N(0, 1))

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "archpred/dataset.hpp"
#include "archpred/graph.hpp"
#include "archpred/language.hpp"
#include "archpred/random.hpp"

namespace archpred {

struct OracleConfig {
  std::map<std::string, double> base_cost{
      {"Conv", 2.0}, {"DWConv", 0.6}, {"FC", 1.0},     {"BN", 0.25},  {"ReLU", 0.1},
      {"Sigmoid", 0.12}, {"Add", 0.15}, {"Concat", 0.2}, {"Pool", 0.3},
  };
  std::map<std::string, double> precision_multiplier{{"FP32", 1.0}, {"FP16", 0.6}, {"INT8", 0.35}};
  double reference_tflops = 8.0;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    for (const auto& [op, c] : base_cost) {
      if (!(c > 0.0)) throw ContractError("oracle base cost for " + op + " must be positive");
    }
    for (const auto& [prec, m] : precision_multiplier) {
      if (!(m > 0.0)) throw ContractError("precision multiplier for " + prec + " must be positive");
    }
    if (!(reference_tflops > 0.0)) throw ContractError("reference_tflops must be positive");
    if (!(noise_sigma >= 0.0)) throw ContractError("noise_sigma must be non-negative");
  }
};

inline nlohmann::json to_json(const OracleConfig& c) {
  return {{"base_cost", c.base_cost},
          {"precision_multiplier", c.precision_multiplier},
          {"reference_tflops", c.reference_tflops},
          {"noise_sigma", c.noise_sigma},
          {"seed", c.seed}};
}

inline OracleConfig oracle_config_from_json(const nlohmann::json& j) {
  OracleConfig c;
  c.base_cost = j.at("base_cost").get<std::map<std::string, double>>();
  c.precision_multiplier = j.at("precision_multiplier").get<std::map<std::string, double>>();
  c.reference_tflops = j.at("reference_tflops").get<double>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

/// Attribute scaling of a node's base cost; 1.0 at the reference attrs
/// (3x3 kernels, 512x128 FC).
inline double attr_scale(const NodeRecord& node) {
  if (node.op_name == "Conv" || node.op_name == "DWConv" || node.op_name == "Pool") {
    const double k = double(node.attrs.at(0));
    return k * k / 9.0;
  }
  if (node.op_name == "FC") return double(node.attrs.at(0)) * double(node.attrs.at(1)) / (512.0 * 128.0);
  return 1.0;
}

inline double node_cost(const OracleConfig& cfg, const NodeRecord& node) {
  auto it = cfg.base_cost.find(node.op_name);
  if (it == cfg.base_cost.end()) throw KeyError("oracle has no base cost for op " + node.op_name);
  return it->second * attr_scale(node);
}

inline double platform_factor(const OracleConfig& cfg, const PlatformRecord& p) {
  if (!(p.throughput_tflops > 0.0)) throw ContractError("oracle needs a platform with positive throughput");
  auto it = cfg.precision_multiplier.find(p.precision);
  if (it == cfg.precision_multiplier.end()) throw KeyError("oracle has no multiplier for " + p.precision);
  return cfg.reference_tflops / p.throughput_tflops * it->second;
}

/// Noise-free oracle latency in ms.
inline double oracle_latency(const OracleConfig& cfg, const ArchGraph& g, const PlatformRecord& p) {
  double total = 0.0;
  for (const auto& node : g.nodes()) total += node_cost(cfg, node);
  return platform_factor(cfg, p) * total;
}

// ---------------------------------------------------------------------------
// Family generators

namespace detail {

constexpr std::size_t kMinNodes = 4;
constexpr std::size_t kMaxNodes = 20;

class GraphBuilder {
 public:
  std::size_t add(const std::string& op, std::vector<std::int64_t> attrs, std::vector<std::size_t> preds) {
    const auto& schema = OpVocabulary::standard().at(op);
    NodeRecord rec{static_cast<std::int64_t>(nodes_.size()), schema.category, op, std::move(attrs)};
    nodes_.push_back(std::move(rec));
    for (std::size_t p : preds) edges_.emplace_back(std::int64_t(p), std::int64_t(nodes_.size() - 1));
    return nodes_.size() - 1;
  }
  std::size_t size() const { return nodes_.size(); }
  std::size_t last() const { return nodes_.size() - 1; }
  ArchGraph build() { return ArchGraph::build(nodes_, edges_); }

 private:
  std::vector<NodeRecord> nodes_;
  std::vector<std::pair<std::int64_t, std::int64_t>> edges_;
};

inline std::int64_t pick(Rng& rng, std::initializer_list<std::int64_t> options) {
  return *(options.begin() + std::ptrdiff_t(rng.below(options.size())));
}

inline std::int64_t kernel(Rng& rng) { return pick(rng, {1, 3, 5, 7}); }

/// Adds single-node chain tail until `target` nodes exist.
inline void pad_chain(GraphBuilder& b, Rng& rng, std::size_t target) {
  while (b.size() < target) {
    switch (rng.below(3)) {
      case 0: b.add("ReLU", {}, {b.last()}); break;
      case 1: b.add("BN", {}, {b.last()}); break;
      default: b.add("Conv", {kernel(rng)}, {b.last()}); break;
    }
  }
}

inline void add_fc_tail(GraphBuilder& b, Rng& rng) {
  b.add("FC", {pick(rng, {256, 512, 1024}), pick(rng, {64, 128, 256})}, {b.last()});
}

// Each generator builds a graph of exactly `target` nodes (4..20).


inline ArchGraph gen_vgg(Rng& rng, std::size_t target) {
  GraphBuilder b;
  b.add("Conv", {3}, {});
  while (b.size() + 2 < target) {
    if (rng.below(4) == 0) {
      b.add("Pool", {2}, {b.last()});
    } else {
      b.add("Conv", {3}, {b.last()});
    }
    if (b.size() + 1 < target) b.add("ReLU", {}, {b.last()});
  }
  pad_chain(b, rng, target - 1);
  add_fc_tail(b, rng);
  return b.build();
}

inline ArchGraph gen_resnet(Rng& rng, std::size_t target) {
  GraphBuilder b;
  b.add("Conv", {pick(rng, {3, 7})}, {});
  while (b.size() + 6 <= target) {
    const std::size_t in = b.last();
    b.add("Conv", {3}, {in});
    b.add("BN", {}, {b.last()});
    b.add("ReLU", {}, {b.last()});
    b.add("Conv", {kernel(rng)}, {b.last()});
    b.add("Add", {}, {in, b.last()});
    b.add("ReLU", {}, {b.last()});
  }
  pad_chain(b, rng, target);
  return b.build();
}

inline ArchGraph gen_inception(Rng& rng, std::size_t target) {
  GraphBuilder b;
  b.add("Conv", {3}, {});
  while (true) {
    const std::size_t branches = 2 + rng.below(3);
    if (b.size() + 2 * branches + 1 > target) break;
    const std::size_t in = b.last();
    std::vector<std::size_t> outs;
    for (std::size_t k = 0; k < branches; ++k) {
      const std::size_t first = k == branches - 1 ? b.add("Pool", {3}, {in}) : b.add("Conv", {1}, {in});
      outs.push_back(b.add("Conv", {kernel(rng)}, {first}));
    }
    b.add("Concat", {}, outs);
  }
  pad_chain(b, rng, target);
  return b.build();
}

inline ArchGraph gen_mobilenet(Rng& rng, std::size_t target) {
  GraphBuilder b;
  b.add("Conv", {3}, {});
  const char* cycle[] = {"DWConv", "BN", "ReLU", "Conv", "BN", "ReLU"};
  std::size_t k = 0;
  while (b.size() + 1 < target) {
    const std::string op = cycle[k++ % 6];
    if (op == "DWConv") {
      b.add(op, {pick(rng, {3, 5})}, {b.last()});
    } else if (op == "Conv") {
      b.add(op, {1}, {b.last()});
    } else {
      b.add(op, {}, {b.last()});
    }
  }
  add_fc_tail(b, rng);
  return b.build();
}

inline ArchGraph gen_densenet(Rng& rng, std::size_t target) {
  GraphBuilder b;
  std::vector<std::size_t> block{b.add("Conv", {3}, {})};
  while (b.size() + 3 <= target) {
    const std::size_t in = block.size() == 1 ? block.front() : b.add("Concat", {}, block);
    const std::size_t c = b.add("Conv", {pick(rng, {1, 3})}, {in});
    block.push_back(b.add("ReLU", {}, {c}));
    if (block.size() > 3) block.erase(block.begin());
  }
  pad_chain(b, rng, target);
  return b.build();
}

inline ArchGraph gen_alexnet(Rng& rng, std::size_t target) {
  GraphBuilder b;
  b.add("Conv", {pick(rng, {5, 7})}, {});
  b.add("ReLU", {}, {b.last()});
  while (b.size() + 3 < target) {
    b.add("Conv", {pick(rng, {3, 5})}, {b.last()});
    if (rng.below(2)) {
      b.add("ReLU", {}, {b.last()});
    } else {
      b.add("Pool", {pick(rng, {2, 3})}, {b.last()});
    }
  }
  pad_chain(b, rng, std::max(target - 2, b.size()));
  while (b.size() < target) add_fc_tail(b, rng);
  return b.build();
}

inline ArchGraph gen_nas_cell(Rng& rng, std::size_t target) {
  GraphBuilder b;
  b.add("Conv", {3}, {});
  const char* ops[] = {"Conv", "DWConv", "Pool", "BN", "ReLU"};
  while (b.size() + 1 < target) {
    const std::size_t n = b.size();
    const std::size_t p1 = n - 1 - rng.below(std::min<std::size_t>(n, 3));
    const std::string op = ops[rng.below(5)];
    std::vector<std::int64_t> attrs;
    if (op == "Conv" || op == "DWConv") attrs = {kernel(rng)};
    if (op == "Pool") attrs = {pick(rng, {2, 3})};
    if (n >= 3 && rng.below(3) == 0) {
      std::size_t p2 = rng.below(n);
      if (p2 == p1) p2 = (p1 + 1) % n;
      const std::size_t a = b.add(op, attrs, {p1});
      if (b.size() + 1 < target) b.add("Add", {}, {a, std::min(p2, a - 1)});
    } else {
      b.add(op, attrs, {p1});
    }
  }
  b.add("Concat", {}, {b.last()});
  return b.build();
}

inline ArchGraph gen_squeezenet(Rng& rng, std::size_t target) {
  GraphBuilder b;
  b.add("Conv", {3}, {});
  while (b.size() + 4 <= target) {
    const std::size_t squeeze = b.add("Conv", {1}, {b.last()});
    const std::size_t e1 = b.add("Conv", {1}, {squeeze});
    const std::size_t e3 = b.add("Conv", {3}, {squeeze});
    b.add("Concat", {}, {e1, e3});
  }
  pad_chain(b, rng, target);
  return b.build();
}

inline ArchGraph gen_senet(Rng& rng, std::size_t target) {
  GraphBuilder b;
  b.add("Conv", {3}, {});
  while (b.size() + 5 <= target) {
    const std::size_t x = b.add("Conv", {kernel(rng)}, {b.last()});
    b.add("Pool", {pick(rng, {2, 3})}, {x});
    b.add("FC", {pick(rng, {256, 512}), 64}, {b.last()});
    b.add("Sigmoid", {}, {b.last()});
    b.add("Add", {}, {x, b.last()});
  }
  pad_chain(b, rng, target);
  return b.build();
}

inline ArchGraph gen_transformer(Rng& rng, std::size_t target) {
  GraphBuilder b;
  b.add("FC", {512, 128}, {});
  while (b.size() + 5 <= target) {
    const std::size_t in = b.last();
    b.add("BN", {}, {in});
    b.add("FC", {pick(rng, {256, 512}), pick(rng, {128, 256})}, {b.last()});
    b.add("ReLU", {}, {b.last()});
    b.add("FC", {pick(rng, {512, 1024}), 128}, {b.last()});
    b.add("Add", {}, {in, b.last()});
  }
  while (b.size() < target) b.add(rng.below(2) ? "BN" : "ReLU", {}, {b.last()});
  return b.build();
}

struct FamilyEntry {
  const char* name;
  ArchGraph (*generate)(Rng&, std::size_t);
};

inline const std::vector<FamilyEntry>& family_table() {
  static const std::vector<FamilyEntry> table{
      {"VGG-like", gen_vgg},         {"ResNet-like", gen_resnet},       {"Inception-like", gen_inception},
      {"MobileNet-like", gen_mobilenet}, {"DenseNet-like", gen_densenet}, {"AlexNet-like", gen_alexnet},
      {"NASCell-like", gen_nas_cell},  {"SqueezeNet-like", gen_squeezenet}, {"SENet-like", gen_senet},
      {"Transformer-like", gen_transformer},
  };
  return table;
}

}  // namespace detail

/// Names of all registered families, in a fixed order.
inline std::vector<std::string> available_families() {
  std::vector<std::string> out;
  for (const auto& f : detail::family_table()) out.emplace_back(f.name);
  return out;
}

/// The first `k` registered families.
inline std::vector<std::string> first_families(std::size_t k) {
  auto all = available_families();
  if (k == 0 || k > all.size()) {
    throw ContractError("family count must be in 1.." + std::to_string(all.size()));
  }
  all.resize(k);
  return all;
}

/// One random architecture of the named family with 4..20 nodes.
inline ArchGraph generate_architecture(const std::string& family, Rng& rng) {
  for (const auto& f : detail::family_table()) {
    if (family == f.name) {
      const std::size_t target = detail::kMinNodes + rng.below(detail::kMaxNodes - detail::kMinNodes + 1);
      return f.generate(rng, target);
    }
  }
  throw KeyError("unknown family '" + family + "'");
}

/// Default desk-scale platform catalog: four devices at FP32 and INT8.
inline PlatformCatalog default_platform_catalog() {
  return {
      {"gena-fp32", "Syn", "GPU", "FP32", 8.1, "GenA", 70},   {"gena-int8", "Syn", "GPU", "INT8", 32, "GenA", 70},
      {"genb-fp32", "Syn", "GPU", "FP32", 14, "GenB", 150},   {"genb-int8", "Syn", "GPU", "INT8", 56, "GenB", 150},
      {"genc-fp32", "Syn", "CPU", "FP32", 1.5, "GenC", 65},   {"genc-int8", "Syn", "CPU", "INT8", 6, "GenC", 65},
      {"gend-fp32", "Syn", "NPU", "FP32", 4, "GenD", 15},     {"gend-int8", "Syn", "NPU", "INT8", 16, "GenD", 15},
  };
}

/// `count` extra synthetic devices, each at FP32 and INT8 with INT8
/// throughput 4x FP32 and FP32 throughput log-uniform in [1, 40] TFLOPS.
/// Microarchitecture names and power ratings come from a small pool shared by
/// many devices, as with real product lines. Pure in seed.
inline PlatformCatalog random_platform_catalog(std::size_t count, std::uint64_t seed) {
  static const char* const kDevices[] = {"GPU", "CPU", "NPU"};
  static const char* const kArchs[] = {"GenE", "GenF", "GenG", "GenH"};
  static const double kTdp[] = {15, 65, 70, 150, 250};
  Rng rng(seed);
  PlatformCatalog out;
  for (std::size_t g = 0; g < count; ++g) {
    const double fp32 = std::round(10.0 * std::exp(rng.uniform(0.0, std::log(40.0)))) / 10.0;
    const std::string id = "syn" + std::to_string(g);
    const std::string device = kDevices[rng.below(std::size(kDevices))];
    const std::string arch = kArchs[rng.below(std::size(kArchs))];
    const double tdp = kTdp[rng.below(std::size(kTdp))];
    out.push_back({id + "-fp32", "Syn", device, "FP32", fp32, arch, tdp});
    out.push_back({id + "-int8", "Syn", device, "INT8", std::round(40.0 * fp32) / 10.0, arch, tdp});
  }
  return out;
}

/// Samples are assigned to families round-robin and to platforms uniformly
/// at random. Pure in cfg.seed.
inline Dataset generate_synthetic(const OracleConfig& cfg, std::size_t n_samples,
                                  const std::vector<std::string>& families, const PlatformCatalog& platforms) {
  cfg.validate();
  if (n_samples == 0) throw ContractError("n_samples must be positive");
  if (families.empty()) throw ContractError("family spec is empty");
  if (platforms.empty()) throw ContractError("platform catalog is empty");
  Rng rng(cfg.seed);
  Dataset ds;
  ds.samples.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    Sample s;
    s.family = families[i % families.size()];
    s.graph = generate_architecture(s.family, rng);
    s.platform = platforms[rng.below(platforms.size())];
    const double noise = std::exp(cfg.noise_sigma * rng.normal());
    s.target = {TaskKind::latency, oracle_latency(cfg, s.graph, s.platform) * noise};
    s.name = "syn-" + std::to_string(cfg.seed) + "-" + std::to_string(i);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace archpred
