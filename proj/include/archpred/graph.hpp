#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "archpred/errors.hpp"
#include "archpred/tensor.hpp"

namespace archpred {

enum class OpCategory { ParamL, ParamN };

inline std::string to_string(OpCategory c) { return c == OpCategory::ParamL ? "ParamL" : "ParamN"; }

inline OpCategory parse_category(const std::string& s) {
  if (s == "ParamL") return OpCategory::ParamL;
  if (s == "ParamN") return OpCategory::ParamN;
  throw SchemaError("unknown op category '" + s + "'");
}

struct OpSchema {
  std::string name;
  OpCategory category;
  std::size_t attr_count;
};

/// Registered operations and their attribute arity.
class OpVocabulary {
 public:
  explicit OpVocabulary(std::vector<OpSchema> ops) : ops_(std::move(ops)) {}

  static const OpVocabulary& standard() {
    static const OpVocabulary vocab({
        {"Conv", OpCategory::ParamL, 1},    // kernel
        {"DWConv", OpCategory::ParamL, 1},  // kernel
        {"FC", OpCategory::ParamL, 2},      // in, out features
        {"BN", OpCategory::ParamL, 0},
        {"ReLU", OpCategory::ParamN, 0},
        {"Sigmoid", OpCategory::ParamN, 0},
        {"Add", OpCategory::ParamN, 0},
        {"Concat", OpCategory::ParamN, 0},
        {"Pool", OpCategory::ParamN, 1},  // kernel
    });
    return vocab;
  }

  const OpSchema* find(const std::string& name) const {
    for (const auto& op : ops_) {
      if (op.name == name) return &op;
    }
    return nullptr;
  }

  const OpSchema& at(const std::string& name) const {
    if (const OpSchema* op = find(name)) return *op;
    throw VocabularyError("unknown op '" + name + "'");
  }

  const std::vector<OpSchema>& ops() const { return ops_; }

 private:
  std::vector<OpSchema> ops_;
};

struct NodeRecord {
  std::int64_t id = 0;
  OpCategory category = OpCategory::ParamN;
  std::string op_name;
  std::vector<std::int64_t> attrs;

  friend bool operator==(const NodeRecord&, const NodeRecord&) = default;
};

/// Throws if the record does not match its registered schema.
inline void validate_node(const NodeRecord& node, const OpVocabulary& vocab = OpVocabulary::standard()) {
  const OpSchema& schema = vocab.at(node.op_name);
  if (schema.category != node.category) {
    throw SchemaError("node " + std::to_string(node.id) + ": op " + node.op_name + " is " +
                      to_string(schema.category) + ", record says " + to_string(node.category));
  }
  if (schema.attr_count != node.attrs.size()) {
    throw SchemaError("node " + std::to_string(node.id) + ": op " + node.op_name + " takes " +
                      std::to_string(schema.attr_count) + " attrs, got " + std::to_string(node.attrs.size()));
  }
}

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct DagValidation {
  bool ok = true;
  /// Edges forming one directed cycle when !ok.
  std::vector<Edge> cycle;
  /// Topological order (ascending-index tie break) when ok.
  std::vector<std::size_t> order;
};

/// Kahn's algorithm over nodes 0..n-1. Among ready nodes the smallest index
/// goes first, which makes the order unique.
inline DagValidation validate_dag(std::size_t n, std::span<const Edge> edges) {
  std::vector<std::vector<std::size_t>> succ(n);
  std::vector<std::size_t> indegree(n, 0);
  for (const Edge& e : edges) {
    if (e.src >= n || e.dst >= n) throw SchemaError("edge endpoint out of range");
    succ[e.src].push_back(e.dst);
    ++indegree[e.dst];
  }

  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t v = 0; v < n; ++v) {
    if (indegree[v] == 0) ready.push(v);
  }
  DagValidation result;
  std::vector<std::size_t> remaining = indegree;
  while (!ready.empty()) {
    std::size_t v = ready.top();
    ready.pop();
    result.order.push_back(v);
    for (std::size_t w : succ[v]) {
      if (--remaining[w] == 0) ready.push(w);
    }
  }
  if (result.order.size() == n) return result;

  // Every unsorted node still has an unsorted predecessor, so walking
  // predecessors from any of them must revisit a node.
  result.ok = false;
  result.order.clear();
  std::vector<bool> unsorted(n, false);
  for (std::size_t v = 0; v < n; ++v) unsorted[v] = remaining[v] > 0;
  std::vector<std::optional<std::size_t>> pred_in_cycle_set(n);
  for (const Edge& e : edges) {
    if (unsorted[e.src] && unsorted[e.dst] && !pred_in_cycle_set[e.dst]) pred_in_cycle_set[e.dst] = e.src;
  }
  std::size_t start = 0;
  while (!unsorted[start]) ++start;
  std::vector<std::size_t> seen_at(n, SIZE_MAX);
  std::vector<std::size_t> walk;
  std::size_t v = start;
  while (seen_at[v] == SIZE_MAX) {
    seen_at[v] = walk.size();
    walk.push_back(v);
    v = *pred_in_cycle_set[v];
  }
  // walk[seen_at[v]..] is the cycle traversed backwards: cyc[i+1] -> cyc[i].
  std::vector<std::size_t> cyc(walk.begin() + std::ptrdiff_t(seen_at[v]), walk.end());
  for (std::size_t i = 0; i < cyc.size(); ++i) {
    const std::size_t dst = cyc[i];
    const std::size_t src = cyc[(i + 1) % cyc.size()];
    result.cycle.push_back(Edge{src, dst});
  }
  std::reverse(result.cycle.begin(), result.cycle.end());
  return result;
}

/// A validated computation DAG whose nodes are stored in topological order:
/// node i has id i, and every edge goes from a lower to a higher index.
class ArchGraph {
 public:
  ArchGraph() = default;

  /// Validates records and edges (given in terms of record ids), sorts
  /// topologically and reindexes.
  static ArchGraph build(std::vector<NodeRecord> nodes, const std::vector<std::pair<std::int64_t, std::int64_t>>& edges,
                         const OpVocabulary& vocab = OpVocabulary::standard()) {
    if (nodes.empty()) throw SchemaError("architecture has no nodes");
    std::map<std::int64_t, std::size_t> slot_of;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      validate_node(nodes[i], vocab);
      if (!slot_of.emplace(nodes[i].id, i).second) throw SchemaError("duplicate node id " + std::to_string(nodes[i].id));
    }
    // Ascending-id tie break: index nodes by rank of their original id.
    std::vector<std::size_t> by_id;  // rank -> storage slot
    for (const auto& [id, slot] : slot_of) by_id.push_back(slot);
    std::map<std::int64_t, std::size_t> rank_of;
    {
      std::size_t r = 0;
      for (const auto& [id, slot] : slot_of) rank_of[id] = r++;
    }

    std::vector<Edge> ranked;
    std::set<Edge> seen;
    for (const auto& [s, d] : edges) {
      auto si = rank_of.find(s);
      auto di = rank_of.find(d);
      if (si == rank_of.end() || di == rank_of.end()) {
        throw SchemaError("dangling edge " + std::to_string(s) + "->" + std::to_string(d));
      }
      Edge e{si->second, di->second};
      if (!seen.insert(e).second) throw SchemaError("duplicate edge " + std::to_string(s) + "->" + std::to_string(d));
      ranked.push_back(e);
    }

    DagValidation check = validate_dag(nodes.size(), ranked);
    if (!check.ok) {
      std::string msg = "cycle detected:";
      for (const Edge& e : check.cycle) {
        msg += " " + std::to_string(nodes[by_id[e.src]].id) + "->" + std::to_string(nodes[by_id[e.dst]].id);
      }
      throw TopologyError(msg);
    }

    ArchGraph g;
    std::vector<std::size_t> position(nodes.size());
    for (std::size_t pos = 0; pos < check.order.size(); ++pos) {
      const std::size_t rank = check.order[pos];
      position[rank] = pos;
      NodeRecord rec = nodes[by_id[rank]];
      g.topo_order_.push_back(rec.id);
      rec.id = static_cast<std::int64_t>(pos);
      g.nodes_.push_back(std::move(rec));
    }
    for (const Edge& e : ranked) g.edges_.push_back(Edge{position[e.src], position[e.dst]});
    std::sort(g.edges_.begin(), g.edges_.end());
    return g;
  }

  std::size_t size() const { return nodes_.size(); }
  const std::vector<NodeRecord>& nodes() const { return nodes_; }
  const NodeRecord& node(std::size_t i) const { return nodes_.at(i); }
  const std::vector<Edge>& edges() const { return edges_; }
  /// Original ids in topological order.
  const std::vector<std::int64_t>& topo_order() const { return topo_order_; }

  friend bool operator==(const ArchGraph&, const ArchGraph&) = default;

 private:
  std::vector<NodeRecord> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::int64_t> topo_order_;
};

inline DagValidation validate_dag(const ArchGraph& g) { return validate_dag(g.size(), g.edges()); }

/// Binary neighbourhood masks of a DAG: son = A, father = Bi(A^T),
/// grandfather = Bi(A^T A^T). Row i of each mask marks the nodes node i may
/// attend to in that branch.
struct AdjacencyMasks {
  Tensor adjacency;
  Tensor son;
  Tensor father;
  Tensor grandfather;
};

inline Tensor binarize(const Tensor& counts) {
  Tensor out = counts;
  for (double& v : out.data()) v = v > 0.0 ? 1.0 : 0.0;
  return out;
}

inline AdjacencyMasks derive_masks(const ArchGraph& g) {
  const std::size_t n = g.size();
  AdjacencyMasks m;
  m.adjacency = Tensor::zeros(n, n);
  for (const Edge& e : g.edges()) m.adjacency(e.src, e.dst) = 1.0;
  m.son = m.adjacency;
  const Tensor at = m.adjacency.transposed();
  m.father = binarize(at);
  // A^T A^T counts length-2 paths j -> k -> i into row i; Bi collapses
  // multiple paths to 1.
  Tensor paths = Tensor::zeros(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      if (at(i, k) == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) paths(i, j) += at(i, k) * at(k, j);
    }
  m.grandfather = binarize(paths);
  return m;
}

// ---------------------------------------------------------------------------
// JSON documents

struct ArchitectureDocument {
  std::string name;
  ArchGraph graph;
  std::optional<double> latency_ms;
  std::optional<double> accuracy;
  std::optional<std::string> platform_id;
  std::optional<std::string> family;
};

inline ArchitectureDocument parse_architecture_document(const nlohmann::json& doc,
                                                        const OpVocabulary& vocab = OpVocabulary::standard()) {
  try {
    if (!doc.is_object()) throw SchemaError("architecture document must be a JSON object");
    ArchitectureDocument out;
    out.name = doc.value("name", std::string{});
    if (!doc.contains("nodes") || !doc.at("nodes").is_array()) throw SchemaError("architecture needs a 'nodes' array");
    std::vector<NodeRecord> nodes;
    for (const auto& jn : doc.at("nodes")) {
      NodeRecord rec;
      rec.id = jn.at("id").get<std::int64_t>();
      rec.op_name = jn.at("op").get<std::string>();
      if (!vocab.find(rec.op_name)) throw VocabularyError("unknown op '" + rec.op_name + "'");
      rec.category = jn.contains("category") ? parse_category(jn.at("category").get<std::string>())
                                             : vocab.at(rec.op_name).category;
      if (jn.contains("attrs")) rec.attrs = jn.at("attrs").get<std::vector<std::int64_t>>();
      nodes.push_back(std::move(rec));
    }
    std::vector<std::pair<std::int64_t, std::int64_t>> edges;
    if (doc.contains("edges")) {
      for (const auto& je : doc.at("edges")) {
        if (!je.is_array() || je.size() != 2) throw SchemaError("edge must be a [src, dst] pair");
        edges.emplace_back(je[0].get<std::int64_t>(), je[1].get<std::int64_t>());
      }
    }
    out.graph = ArchGraph::build(std::move(nodes), edges, vocab);
    if (doc.contains("targets")) {
      const auto& t = doc.at("targets");
      if (t.contains("latency_ms")) out.latency_ms = t.at("latency_ms").get<double>();
      if (t.contains("accuracy")) out.accuracy = t.at("accuracy").get<double>();
    }
    if (doc.contains("platform_id")) out.platform_id = doc.at("platform_id").get<std::string>();
    if (doc.contains("family")) out.family = doc.at("family").get<std::string>();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed architecture document: ") + e.what());
  }
}

inline ArchGraph parse_architecture(const nlohmann::json& doc, const OpVocabulary& vocab = OpVocabulary::standard()) {
  return parse_architecture_document(doc, vocab).graph;
}

inline ArchGraph parse_architecture(const std::string& text, const OpVocabulary& vocab = OpVocabulary::standard()) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("invalid JSON: ") + e.what());
  }
  return parse_architecture(doc, vocab);
}

inline nlohmann::json to_json(const ArchitectureDocument& doc) {
  nlohmann::json j;
  j["name"] = doc.name;
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : doc.graph.nodes()) {
    j["nodes"].push_back({{"id", n.id}, {"op", n.op_name}, {"category", to_string(n.category)}, {"attrs", n.attrs}});
  }
  j["edges"] = nlohmann::json::array();
  for (const auto& e : doc.graph.edges()) j["edges"].push_back({e.src, e.dst});
  nlohmann::json targets = nlohmann::json::object();
  if (doc.latency_ms) targets["latency_ms"] = *doc.latency_ms;
  if (doc.accuracy) targets["accuracy"] = *doc.accuracy;
  j["targets"] = targets;
  if (doc.platform_id) j["platform_id"] = *doc.platform_id;
  if (doc.family) j["family"] = *doc.family;
  return j;
}

}  // namespace archpred
