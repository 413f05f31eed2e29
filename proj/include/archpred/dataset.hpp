#pragma once

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "archpred/graph.hpp"
#include "archpred/language.hpp"
#include "archpred/model.hpp"
#include "archpred/random.hpp"

namespace archpred {

struct Sample {
  std::string name;
  ArchGraph graph;
  PlatformRecord platform;
  PredictionTarget target;
  std::string family;

  friend bool operator==(const Sample& a, const Sample& b) {
    return a.name == b.name && a.graph == b.graph && a.platform == b.platform && a.target.kind == b.target.kind &&
           a.target.value == b.target.value && a.family == b.family;
  }
};

struct Dataset {
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  /// Family labels in first-appearance order.
  std::vector<std::string> families() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& s : samples) {
      if (seen.insert(s.family).second) out.push_back(s.family);
    }
    return out;
  }

  std::map<std::string, std::size_t> family_counts() const {
    std::map<std::string, std::size_t> counts;
    for (const auto& s : samples) ++counts[s.family];
    return counts;
  }

  std::map<std::string, std::size_t> platform_counts() const {
    std::map<std::string, std::size_t> counts;
    for (const auto& s : samples) ++counts[s.platform.platform_id];
    return counts;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

using PlatformCatalog = std::vector<PlatformRecord>;

inline const PlatformRecord& find_platform(const PlatformCatalog& catalog, const std::string& id) {
  for (const auto& p : catalog) {
    if (p.platform_id == id) return p;
  }
  throw KeyError("unknown platform_id '" + id + "'");
}

// ---------------------------------------------------------------------------
// Files

inline void write_platforms(const PlatformCatalog& catalog, const std::string& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& p : catalog) j.push_back(to_json(p));
  std::ofstream out(path);
  if (!out) throw IoError("cannot write platform file " + path);
  out << j.dump(2) << '\n';
}

inline PlatformCatalog read_platforms(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read platform file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("platform file " + path + ": " + e.what());
  }
  if (j.is_object()) j = nlohmann::json::array({j});
  if (!j.is_array()) throw SchemaError("platform file must hold an object or an array of objects");
  PlatformCatalog catalog;
  std::set<std::string> ids;
  for (const auto& jp : j) {
    catalog.push_back(platform_from_json(jp));
    if (!ids.insert(catalog.back().platform_id).second) {
      throw SchemaError("duplicate platform_id " + catalog.back().platform_id);
    }
  }
  return catalog;
}

inline nlohmann::json sample_to_json(const Sample& s) {
  ArchitectureDocument doc;
  doc.name = s.name;
  doc.graph = s.graph;
  if (s.target.kind == TaskKind::latency) {
    doc.latency_ms = s.target.value;
  } else {
    doc.accuracy = s.target.value;
  }
  if (s.platform.platform_id != pseudo_platform().platform_id) doc.platform_id = s.platform.platform_id;
  doc.family = s.family;
  return to_json(doc);
}

inline Sample sample_from_json(const nlohmann::json& j, const PlatformCatalog& catalog, TaskKind task) {
  ArchitectureDocument doc = parse_architecture_document(j);
  Sample s;
  s.name = doc.name;
  s.graph = std::move(doc.graph);
  s.family = doc.family.value_or("unlabeled");
  if (doc.platform_id) {
    s.platform = find_platform(catalog, *doc.platform_id);
  } else if (task == TaskKind::accuracy) {
    s.platform = pseudo_platform();
  } else {
    throw SchemaError("latency sample '" + s.name + "' has no platform_id");
  }
  s.target.kind = task;
  const std::optional<double>& value = task == TaskKind::latency ? doc.latency_ms : doc.accuracy;
  if (!value) throw SchemaError("sample '" + s.name + "' has no " + to_string(task) + " target");
  s.target.value = *value;
  validate_target(s.target);
  return s;
}

inline void write_dataset_jsonl(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset " + path);
  for (const auto& s : ds.samples) out << sample_to_json(s).dump() << '\n';
}

/// Newline-delimited JSON, one architecture document per line. Blank lines
/// are skipped; errors name the offending line.
inline Dataset read_dataset_jsonl(const std::string& path, const PlatformCatalog& catalog,
                                  TaskKind task = TaskKind::latency) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read dataset " + path);
  Dataset ds;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      ds.samples.push_back(sample_from_json(nlohmann::json::parse(line), catalog, task));
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw SchemaError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (ds.empty()) throw SchemaError("dataset " + path + " is empty");
  return ds;
}

// ---------------------------------------------------------------------------
// Split protocols. Each returns (train, test); together they partition the
// input and preserve sample order.

using Split = std::pair<Dataset, Dataset>;

/// Test side: every sample of `family`; train side: all others.
inline Split split_leave_one_family_out(const Dataset& ds, const std::string& family) {
  Split out;
  bool found = false;
  for (const auto& s : ds.samples) {
    const bool held_out = s.family == family;
    found = found || held_out;
    (held_out ? out.second : out.first).samples.push_back(s);
  }
  if (!found) throw KeyError("family '" + family + "' not present in dataset");
  return out;
}

/// Test side: every sample measured on the held-out configuration (a
/// platform_id names one device at one precision).
inline Split split_platform_zero_shot(const Dataset& ds, const std::string& platform_id) {
  Split out;
  bool found = false;
  for (const auto& s : ds.samples) {
    const bool held_out = s.platform.platform_id == platform_id;
    found = found || held_out;
    (held_out ? out.second : out.first).samples.push_back(s);
  }
  if (!found) throw KeyError("platform configuration '" + platform_id + "' not present in dataset");
  return out;
}

/// Seeded random split with round(test_fraction * n) test samples.
inline Split split_random(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw ContractError("test_fraction must lie in [0, 1]");
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * double(ds.size())));
  std::vector<bool> is_test(ds.size(), false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[idx[i]] = true;
  Split out;
  for (std::size_t i = 0; i < ds.size(); ++i) (is_test[i] ? out.second : out.first).samples.push_back(ds.samples[i]);
  return out;
}

/// Parses "leave-out:<family>", "platform:<id>" or "random:<fraction>".
inline Split apply_split(const Dataset& ds, const std::string& spec, std::uint64_t seed = 0) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw ContractError("split must look like kind:arg, got '" + spec + "'");
  const std::string kind = spec.substr(0, colon);
  const std::string arg = spec.substr(colon + 1);
  if (kind == "leave-out") return split_leave_one_family_out(ds, arg);
  if (kind == "platform") return split_platform_zero_shot(ds, arg);
  if (kind == "random") return split_random(ds, std::stod(arg), seed);
  throw ContractError("unknown split kind '" + kind + "'");
}

}  // namespace archpred
