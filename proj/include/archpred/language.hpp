#pragma once

// Language templates for nodes and hardware platforms, and the whitespace
// tokenizer that maps them onto vocabulary ids.

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "archpred/errors.hpp"
#include "archpred/graph.hpp"

namespace archpred {

struct PlatformRecord {
  std::string platform_id;
  std::string vendor;
  std::string device_class;
  std::string precision;  // FP32 | FP16 | INT8
  double throughput_tflops = 0.0;
  std::string microarch;
  double tdp_watts = 0.0;

  friend bool operator==(const PlatformRecord&, const PlatformRecord&) = default;
};

inline bool is_known_precision(std::string_view p) { return p == "FP32" || p == "FP16" || p == "INT8"; }

inline void validate_platform(const PlatformRecord& p) {
  auto require = [&](const std::string& v, const char* field) {
    if (v.empty()) throw SchemaError(std::string("platform '") + p.platform_id + "' missing field " + field);
    if (v.find_first_of(" \t\n") != std::string::npos) {
      throw SchemaError(std::string("platform field ") + field + " must be a single word");
    }
  };
  require(p.platform_id, "platform_id");
  require(p.vendor, "vendor");
  require(p.device_class, "device_class");
  require(p.microarch, "microarch");
  if (!is_known_precision(p.precision)) throw SchemaError("platform precision must be FP32, FP16 or INT8");
  if (!(p.throughput_tflops >= 0.0) || !(p.tdp_watts >= 0.0)) throw SchemaError("platform numbers must be >= 0");
}

/// Stand-in platform for tasks without hardware (accuracy prediction).
inline PlatformRecord pseudo_platform() {
  return {"none", "None", "None", "FP32", 0.0, "None", 0.0};
}

inline PlatformRecord platform_from_json(const nlohmann::json& j) {
  PlatformRecord p;
  try {
    p.platform_id = j.at("platform_id").get<std::string>();
    p.vendor = j.at("vendor").get<std::string>();
    p.device_class = j.at("device_class").get<std::string>();
    p.precision = j.at("precision").get<std::string>();
    p.throughput_tflops = j.at("throughput_tflops").get<double>();
    p.microarch = j.at("microarch").get<std::string>();
    p.tdp_watts = j.at("tdp_watts").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("platform record: ") + e.what());
  }
  validate_platform(p);
  return p;
}

inline nlohmann::json to_json(const PlatformRecord& p) {
  return {{"platform_id", p.platform_id}, {"vendor", p.vendor},       {"device_class", p.device_class},
          {"precision", p.precision},     {"throughput_tflops", p.throughput_tflops},
          {"microarch", p.microarch},     {"tdp_watts", p.tdp_watts}};
}

/// Shortest decimal that round-trips: 8.1 -> "8.1", 1.0 -> "1", 70 -> "70".
inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw ContractError("cannot format number");
  return std::string(buf, ptr);
}

/// Whitespace-normalized template text: single spaces, no padding.
class TemplateString {
 public:
  explicit TemplateString(std::string text) : text_(std::move(text)) {
    if (text_.empty()) throw ContractError("empty template");
    bool prev_space = true;
    for (char c : text_) {
      const bool space = c == ' ';
      if (c == '\t' || c == '\n' || c == '\r' || (space && prev_space)) {
        throw ContractError("template '" + text_ + "' is not single-space separated");
      }
      prev_space = space;
    }
    if (prev_space) throw ContractError("template '" + text_ + "' has trailing whitespace");
  }

  const std::string& text() const { return text_; }

  std::vector<std::string> words() const {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text_.size()) {
      std::size_t end = text_.find(' ', start);
      if (end == std::string::npos) end = text_.size();
      out.push_back(text_.substr(start, end - start));
      start = end + 1;
    }
    return out;
  }

  friend bool operator==(const TemplateString&, const TemplateString&) = default;

 private:
  std::string text_;
};

/// "<category> <op> <attr_1> ... <attr_k>", e.g. "ParamL Conv 3".
inline TemplateString render_node_template(const NodeRecord& node, const OpVocabulary& vocab = OpVocabulary::standard()) {
  validate_node(node, vocab);
  std::string text = to_string(node.category) + " " + node.op_name;
  for (std::int64_t a : node.attrs) text += " " + std::to_string(a);
  return TemplateString(std::move(text));
}

/// "<vendor> <class> <precision> <throughput> <microarch> <tdp>W", e.g.
/// "Nv GPU FP32 8.1 Turing 70W".
inline TemplateString render_platform_template(const PlatformRecord& p) {
  validate_platform(p);
  return TemplateString(p.vendor + " " + p.device_class + " " + p.precision + " " + format_number(p.throughput_tflops) +
                        " " + p.microarch + " " + format_number(p.tdp_watts) + "W");
}

/// True when the whole word parses as a decimal number.
inline std::optional<double> parse_number_word(std::string_view word) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), v);
  if (ec != std::errc() || ptr != word.data() + word.size()) return std::nullopt;
  return v;
}

struct TokenSequence {
  std::vector<std::size_t> ids;
  // Surface forms, kept so vocabulary-free encoders can see unseen words.
  std::vector<std::string> words;
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// Word-level vocabulary. Ids 0 and 1 are reserved for PAD and UNK; the
/// remaining words are stored in lexicographic order so that the mapping
/// does not depend on corpus order.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr const char* kPadWord = "<pad>";
  static constexpr const char* kUnkWord = "<unk>";

  Vocabulary() : words_{kPadWord, kUnkWord} { reindex(); }

  static Vocabulary build(const std::vector<TemplateString>& corpus) {
    std::set<std::string> uniq;
    for (const auto& t : corpus)
      for (auto& w : t.words()) uniq.insert(std::move(w));
    uniq.erase(kPadWord);
    uniq.erase(kUnkWord);
    Vocabulary v;
    v.words_.insert(v.words_.end(), uniq.begin(), uniq.end());
    v.reindex();
    return v;
  }

  static Vocabulary from_words(std::vector<std::string> words) {
    if (words.size() < 2 || words[0] != kPadWord || words[1] != kUnkWord) {
      throw FormatError("vocabulary must start with <pad> and <unk>");
    }
    Vocabulary v;
    v.words_ = std::move(words);
    v.reindex();
    if (v.index_.size() != v.words_.size()) throw FormatError("vocabulary has duplicate words");
    return v;
  }

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  std::size_t id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& word(std::size_t id) const {
    if (id >= words_.size()) throw VocabularyError("token id " + std::to_string(id) + " out of range");
    return words_[id];
  }

  /// Newline-delimited words; line number is the id.
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write vocabulary file " + path);
    for (const auto& w : words_) out << w << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read vocabulary file " + path);
    std::vector<std::string> words;
    for (std::string line; std::getline(in, line);) words.push_back(line);
    return from_words(std::move(words));
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
  }

  std::vector<std::string> words_;
  std::map<std::string, std::size_t> index_;
};

/// Whitespace split plus vocabulary lookup, truncated to max_len tokens.
inline TokenSequence tokenize(const TemplateString& t, const Vocabulary& vocab, std::size_t max_len = 64) {
  TokenSequence seq;
  for (const auto& w : t.words()) {
    if (seq.ids.size() == max_len) break;
    seq.ids.push_back(vocab.id(w));
    seq.words.push_back(w);
  }
  return seq;
}

}  // namespace archpred
