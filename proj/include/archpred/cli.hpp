#pragma once

// Command-line front end. Every subcommand resolves a RunConfig from
// built-in defaults, then an optional --config JSON file (merge patch),
// then explicit flags, and freezes it into its output directory.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "archpred/archpred.hpp"

namespace archpred {

inline constexpr const char* kOutputRootEnv = "ARCHPRED_OUT";

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitTraining = 3 };

struct SyntheticOptions {
  std::size_t samples = 2000;
  std::size_t families = 8;
  double noise_sigma = 0.05;
  std::size_t extra_platforms = 0;
};

struct RunConfig {
  std::string command;
  std::string dataset;
  std::string platforms;
  std::string eval_dataset;
  std::string checkpoint;
  std::string out_dir;
  std::string split;
  std::string split_side = "test";
  std::string arch;
  std::string platform_id;
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainHyper hyper;
  double finetune_lr = kFinetuneLr;
  SyntheticOptions synthetic;
};

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"command", c.command},
          {"dataset", c.dataset},
          {"platforms", c.platforms},
          {"eval_dataset", c.eval_dataset},
          {"checkpoint", c.checkpoint},
          {"out_dir", c.out_dir},
          {"split", c.split},
          {"split_side", c.split_side},
          {"arch", c.arch},
          {"platform_id", c.platform_id},
          {"seed", c.seed},
          {"model", to_json(c.model)},
          {"hyper",
           {{"epochs", c.hyper.epochs},
            {"batch_size", c.hyper.batch_size},
            {"lr", c.hyper.lr},
            {"finetune_lr", c.finetune_lr},
            {"init_head_bias", c.hyper.init_head_bias},
            {"cosine_decay", c.hyper.cosine_decay},
            {"lr_floor", c.hyper.lr_floor},
            {"threads", c.hyper.threads}}},
          {"synthetic",
           {{"samples", c.synthetic.samples},
            {"families", c.synthetic.families},
            {"noise_sigma", c.synthetic.noise_sigma},
            {"extra_platforms", c.synthetic.extra_platforms}}}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  try {
    RunConfig c;
    c.command = j.at("command").get<std::string>();
    c.dataset = j.at("dataset").get<std::string>();
    c.platforms = j.at("platforms").get<std::string>();
    c.eval_dataset = j.at("eval_dataset").get<std::string>();
    c.checkpoint = j.at("checkpoint").get<std::string>();
    c.out_dir = j.at("out_dir").get<std::string>();
    c.split = j.at("split").get<std::string>();
    c.split_side = j.at("split_side").get<std::string>();
    c.arch = j.at("arch").get<std::string>();
    c.platform_id = j.at("platform_id").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.model = model_config_from_json(j.at("model"));
    const auto& h = j.at("hyper");
    c.hyper.epochs = h.at("epochs").get<std::size_t>();
    c.hyper.batch_size = h.at("batch_size").get<std::size_t>();
    c.hyper.lr = h.at("lr").get<double>();
    c.finetune_lr = h.at("finetune_lr").get<double>();
    c.hyper.init_head_bias = h.at("init_head_bias").get<bool>();
    c.hyper.cosine_decay = h.at("cosine_decay").get<bool>();
    c.hyper.lr_floor = h.at("lr_floor").get<double>();
    c.hyper.threads = h.at("threads").get<std::size_t>();
    const auto& s = j.at("synthetic");
    c.synthetic.samples = s.at("samples").get<std::size_t>();
    c.synthetic.families = s.at("families").get<std::size_t>();
    c.synthetic.noise_sigma = s.at("noise_sigma").get<double>();
    c.synthetic.extra_platforms = s.value("extra_platforms", std::size_t{0});
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("run config: ") + e.what());
  }
}

/// Defaults overlaid with a (possibly partial) JSON config file.
inline RunConfig load_run_config(const std::string& path, RunConfig defaults = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  nlohmann::json patch;
  try {
    in >> patch;
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("config " + path + ": " + e.what());
  }
  nlohmann::json merged = to_json(defaults);
  merged.merge_patch(patch);
  return run_config_from_json(merged);
}

namespace cli_detail {

namespace fs = std::filesystem;

/// Flag bindings applied on top of the config after parsing, so explicit
/// flags win over the config file.
class Overrides {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& name, std::function<void(RunConfig&, const T&)> apply,
                   const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, help);
    setters_.push_back([opt, value, apply](RunConfig& c) {
      if (opt->count() > 0) apply(c, *value);
    });
    return opt;
  }

  CLI::Option* add_flag(CLI::App* app, const std::string& name, std::function<void(RunConfig&)> apply,
                        const std::string& help) {
    CLI::Option* opt = app->add_flag(name, help);
    setters_.push_back([opt, apply](RunConfig& c) {
      if (opt->count() > 0) apply(c);
    });
    return opt;
  }

  void apply(RunConfig& c) const {
    for (const auto& s : setters_) s(c);
  }

 private:
  std::vector<std::function<void(RunConfig&)>> setters_;
};

template <class T>
std::function<void(RunConfig&, const T&)> set(T RunConfig::*field) {
  return [field](RunConfig& c, const T& v) { c.*field = v; };
}

inline void add_model_flags(CLI::App* app, Overrides& o) {
  o.add<std::string>(app, "--task", [](RunConfig& c, const std::string& v) { c.model.task = parse_task(v); },
                     "latency or accuracy");
  o.add<std::size_t>(app, "--d-model", [](RunConfig& c, const std::size_t& v) {
    c.model.dgsa.d_model = v;
    c.model.encoder.d_model = v;
  }, "embedding and model width");
  o.add<std::size_t>(app, "--heads", [](RunConfig& c, const std::size_t& v) { c.model.dgsa.n_heads = v; },
                     "attention heads");
  o.add<std::size_t>(app, "--layers", [](RunConfig& c, const std::size_t& v) { c.model.dgsa.n_layers = v; },
                     "DGSA layers");
  o.add<std::size_t>(app, "--head-hidden", [](RunConfig& c, const std::size_t& v) { c.model.head_hidden = v; },
                     "hidden width of the prediction head");
  o.add<std::string>(app, "--gate-mode",
                     [](RunConfig& c, const std::string& v) { c.model.dgsa.gate_mode = parse_gate_mode(v); },
                     "dynamic | uniform | full");
  o.add<std::string>(app, "--mask-mode",
                     [](RunConfig& c, const std::string& v) { c.model.dgsa.mask_mode = parse_mask_mode(v); },
                     "hadamard | additive");
  o.add_flag(app, "--scale-gate-scores", [](RunConfig& c) { c.model.dgsa.scale_gate_scores = true; },
             "divide gate attention scores by sqrt(head_dim)");
  o.add<std::string>(app, "--encoder",
                     [](RunConfig& c, const std::string& v) { c.model.encoder.kind = parse_encoder_kind(v); },
                     "hash | random-init | trainable");
  o.add_flag(app, "--encoder-trainable", [](RunConfig& c) { c.model.encoder.trainable = true; },
             "update encoder weights during training");
  o.add<std::size_t>(app, "--max-seq-len",
                     [](RunConfig& c, const std::size_t& v) { c.model.encoder.max_seq_len = v; },
                     "template token limit");
}

inline void add_hyper_flags(CLI::App* app, Overrides& o, bool finetune) {
  o.add<std::size_t>(app, "--epochs", [](RunConfig& c, const std::size_t& v) { c.hyper.epochs = v; }, "epochs");
  o.add<std::size_t>(app, "--batch-size", [](RunConfig& c, const std::size_t& v) { c.hyper.batch_size = v; },
                     "mini-batch size");
  if (finetune) {
    o.add<double>(app, "--lr", set(&RunConfig::finetune_lr), "learning rate (default 1e-4)");
  } else {
    o.add<double>(app, "--lr", [](RunConfig& c, const double& v) { c.hyper.lr = v; }, "learning rate");
  }
  o.add_flag(app, "--constant-lr", [](RunConfig& c) { c.hyper.cosine_decay = false; },
             "disable the cosine learning-rate decay");
}

inline void add_common_flags(CLI::App* app, Overrides& o) {
  o.add<std::uint64_t>(app, "--seed", set(&RunConfig::seed), "random seed");
  o.add<std::string>(app, "--out", set(&RunConfig::out_dir), "output directory");
  o.add<std::size_t>(app, "--threads", [](RunConfig& c, const std::size_t& v) { c.hyper.threads = v; },
                     "evaluation threads");
}

inline void add_data_flags(CLI::App* app, Overrides& o) {
  o.add<std::string>(app, "--data", set(&RunConfig::dataset), "dataset JSONL");
  o.add<std::string>(app, "--platforms", set(&RunConfig::platforms), "platform JSON file");
  o.add<std::string>(app, "--split", set(&RunConfig::split), "leave-out:<family> | platform:<id> | random:<frac>");
}

inline std::string resolve_out_dir(RunConfig& c) {
  if (c.out_dir.empty()) {
    const char* root = std::getenv(kOutputRootEnv);
    c.out_dir = (fs::path(root && *root ? root : "runs") / c.command).string();
  }
  std::error_code ec;
  fs::create_directories(c.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + c.out_dir + ": " + ec.message());
  return c.out_dir;
}

inline std::string out_path(const RunConfig& c, const std::string& file) { return (fs::path(c.out_dir) / file).string(); }

inline void freeze_config(const RunConfig& c) {
  std::ofstream out(out_path(c, "run_config.json"));
  if (!out) throw IoError("cannot write " + out_path(c, "run_config.json"));
  out << to_json(c).dump(2) << '\n';
}

inline void require(const std::string& value, const char* flag) {
  if (value.empty()) throw CLI::RequiredError(flag);
}

inline PlatformCatalog catalog_for(const RunConfig& c) {
  if (c.platforms.empty()) return default_platform_catalog();
  return read_platforms(c.platforms);
}

inline Dataset load_dataset(const RunConfig& c, const std::string& path, TaskKind task) {
  return read_dataset_jsonl(path, catalog_for(c), task);
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : "n/a"; }

inline void print_report(const MetricsReport& r, std::ostream& out) {
  out << "samples " << r.count << "\n";
  out << "MAPE(%) " << format_number(r.mape_pct) << "\n";
  out << "Acc(10%) " << format_number(r.acc_at_10_pct) << "\n";
  out << "KendallTau " << format_optional(r.kendall_tau) << "\n";
  if (!r.per_family.empty()) {
    out << "family,count,mape,acc10,tau\n";
    for (const auto& [family, fr] : r.per_family) {
      out << family << ',' << fr.count << ',' << format_number(fr.mape_pct) << ','
          << format_number(fr.acc_at_10_pct) << ',' << format_optional(fr.kendall_tau) << '\n';
    }
  }
}

inline void write_report_csv(const MetricsReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  auto tau = [](const MetricsReport& m) { return m.kendall_tau ? format_number(*m.kendall_tau) : std::string(); };
  out << "scope,count,mape,acc10,tau\n";
  out << "all," << r.count << ',' << format_number(r.mape_pct) << ',' << format_number(r.acc_at_10_pct) << ','
      << tau(r) << '\n';
  for (const auto& [family, fr] : r.per_family) {
    out << family << ',' << fr.count << ',' << format_number(fr.mape_pct) << ',' << format_number(fr.acc_at_10_pct)
        << ',' << tau(fr) << '\n';
  }
}

/// Train/eval sides for train and finetune: the split when given, else the
/// whole dataset plus an optional separate eval file.
inline std::pair<Dataset, Dataset> training_sides(const RunConfig& c, TaskKind task) {
  Dataset all = load_dataset(c, c.dataset, task);
  Dataset eval;
  if (!c.split.empty()) {
    auto [tr, te] = apply_split(all, c.split, c.seed);
    all = std::move(tr);
    eval = std::move(te);
  }
  if (!c.eval_dataset.empty()) eval = load_dataset(c, c.eval_dataset, task);
  return {std::move(all), std::move(eval)};
}

inline void finish_training(const RunConfig& c, const Model& model, const std::vector<EpochLog>& log,
                            std::ostream& out) {
  const std::string ckpt = out_path(c, "model.ckpt.json");
  save_checkpoint(model, ckpt);
  write_log_csv(log, out_path(c, "log.csv"));
  model.vocabulary().save(out_path(c, "vocab.txt"));
  freeze_config(c);
  if (!log.empty()) out << "final train_loss " << format_number(log.back().train_loss) << "\n";
  if (!log.empty() && log.back().eval) print_report(*log.back().eval, out);
  out << "checkpoint " << ckpt << "\n";
}

inline void cmd_gen_synthetic(RunConfig& c, std::ostream& out) {
  resolve_out_dir(c);
  OracleConfig oc;
  oc.seed = c.seed;
  oc.noise_sigma = c.synthetic.noise_sigma;
  PlatformCatalog catalog = catalog_for(c);
  const PlatformCatalog extra = random_platform_catalog(c.synthetic.extra_platforms, c.seed);
  catalog.insert(catalog.end(), extra.begin(), extra.end());
  const Dataset ds = generate_synthetic(oc, c.synthetic.samples, first_families(c.synthetic.families), catalog);
  write_dataset_jsonl(ds, out_path(c, "dataset.jsonl"));
  write_platforms(catalog, out_path(c, "platforms.json"));
  std::ofstream(out_path(c, "oracle.json")) << to_json(oc).dump(2) << '\n';
  freeze_config(c);
  out << "wrote " << ds.size() << " samples to " << out_path(c, "dataset.jsonl") << "\n";
}

inline void cmd_train(RunConfig& c, std::ostream& out) {
  require(c.dataset, "--data");
  c.model.validate();
  auto [train_ds, eval_ds] = training_sides(c, c.model.task);
  resolve_out_dir(c);
  Model model = Model::create(c.model, build_vocabulary(train_ds, catalog_for(c)), c.seed);
  TrainHyper h = c.hyper;
  h.seed = c.seed;
  const auto log = train(model, train_ds, h, eval_ds.empty() ? nullptr : &eval_ds);
  finish_training(c, model, log, out);
}

inline void cmd_finetune(RunConfig& c, std::ostream& out) {
  require(c.dataset, "--data");
  require(c.checkpoint, "--checkpoint");
  Model model = load_checkpoint(c.checkpoint);
  c.model = model.config();
  auto [train_ds, eval_ds] = training_sides(c, c.model.task);
  resolve_out_dir(c);
  TrainHyper h = c.hyper;
  h.seed = c.seed;
  h.lr = c.finetune_lr;
  const auto log = finetune(model, train_ds, h, eval_ds.empty() ? nullptr : &eval_ds);
  finish_training(c, model, log, out);
}

inline void cmd_eval(RunConfig& c, std::ostream& out) {
  require(c.dataset, "--data");
  require(c.checkpoint, "--checkpoint");
  const Model model = load_checkpoint(c.checkpoint);
  c.model = model.config();
  Dataset ds = load_dataset(c, c.dataset, c.model.task);
  if (!c.split.empty()) {
    if (c.split_side != "train" && c.split_side != "test") throw CLI::ValidationError("--side", "train or test");
    auto [tr, te] = apply_split(ds, c.split, c.seed);
    ds = c.split_side == "train" ? std::move(tr) : std::move(te);
  }
  const MetricsReport r = evaluate(model, ds, c.hyper.threads);
  resolve_out_dir(c);
  write_report_csv(r, out_path(c, "metrics.csv"));
  freeze_config(c);
  print_report(r, out);
}

inline ArchitectureDocument read_arch_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read architecture " + path);
  try {
    return parse_architecture_document(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("architecture " + path + ": " + e.what());
  }
}

inline PlatformRecord platform_for(const RunConfig& c, const ArchitectureDocument& doc, TaskKind task) {
  const std::string id = !c.platform_id.empty() ? c.platform_id : doc.platform_id.value_or("");
  if (id.empty()) {
    if (task == TaskKind::latency) throw CLI::RequiredError("--platform");
    return pseudo_platform();
  }
  return find_platform(catalog_for(c), id);
}

inline void cmd_predict(RunConfig& c, std::ostream& out) {
  require(c.checkpoint, "--checkpoint");
  const Model model = load_checkpoint(c.checkpoint);
  c.model = model.config();
  if (!c.arch.empty()) {
    const ArchitectureDocument doc = read_arch_document(c.arch);
    const PlatformRecord p = platform_for(c, doc, c.model.task);
    out << format_number(model.predict(doc.graph, p)) << "\n";
    return;
  }
  require(c.dataset, "--data or --arch");
  const Dataset ds = load_dataset(c, c.dataset, c.model.task);
  const std::vector<double> preds = predict_all(model, ds, c.hyper.threads);
  resolve_out_dir(c);
  std::ofstream csv(out_path(c, "predictions.csv"));
  if (!csv) throw IoError("cannot write " + out_path(c, "predictions.csv"));
  csv << "name,platform_id,target,prediction\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    csv << ds.samples[i].name << ',' << ds.samples[i].platform.platform_id << ','
        << format_number(ds.samples[i].target.value) << ',' << format_number(preds[i]) << '\n';
  }
  freeze_config(c);
  out << "wrote " << ds.size() << " predictions to " << out_path(c, "predictions.csv") << "\n";
}

inline void print_grid(const Tensor& m, std::ostream& out) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t col = 0; col < m.cols(); ++col) out << (col ? " " : "") << (m(r, col) > 0.0 ? 1 : 0);
    out << "\n";
  }
}

inline void cmd_dump(RunConfig& c, const std::string& what, std::ostream& out) {
  require(c.arch, "--arch");
  const ArchitectureDocument doc = read_arch_document(c.arch);
  const ArchGraph& g = doc.graph;
  if (what == "masks") {
    const AdjacencyMasks m = derive_masks(g);
    out << "grandfather\n";
    print_grid(m.grandfather, out);
    out << "father\n";
    print_grid(m.father, out);
    out << "son\n";
    print_grid(m.son, out);
    return;
  }
  const bool have_platform = !c.platform_id.empty() || doc.platform_id.has_value();
  if (what == "templates") {
    for (const auto& node : g.nodes()) out << render_node_template(node).text() << "\n";
    if (have_platform) out << render_platform_template(platform_for(c, doc, TaskKind::latency)).text() << "\n";
    return;
  }
  if (what == "embeddings") {
    const PlatformRecord p = have_platform ? platform_for(c, doc, TaskKind::latency) : pseudo_platform();
    Tensor e;
    if (!c.checkpoint.empty()) {
      const Model model = load_checkpoint(c.checkpoint);
      e = embed_graph(g, p, model.encoder(), model.params());
    } else {
      Dataset one;
      one.samples.push_back({doc.name, g, p, {}, ""});
      const Encoder enc(c.model.encoder, build_vocabulary(one));
      e = embed_graph(g, p, enc, ParamStore{});
    }
    for (std::size_t r = 0; r < e.rows(); ++r) {
      for (std::size_t col = 0; col < e.cols(); ++col) out << (col ? "," : "") << format_number(e(r, col));
      out << "\n";
    }
    return;
  }
  throw CLI::ValidationError("dump", "expected masks, templates or embeddings, got '" + what + "'");
}

}  // namespace cli_detail

/// Runs the command line; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"Neural architecture latency and accuracy predictor"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "JSON run config supplying defaults; flags override it");

  struct Sub {
    CLI::App* app;
    Overrides overrides;
  };
  std::vector<std::unique_ptr<Sub>> subs;
  auto make = [&](const std::string& name, const std::string& help) {
    subs.push_back(std::make_unique<Sub>(Sub{app.add_subcommand(name, help), {}}));
    return subs.back().get();
  };

  Sub* gen = make("gen-synthetic", "write a synthetic dataset, its platforms and the oracle config");
  add_common_flags(gen->app, gen->overrides);
  gen->overrides.add<std::size_t>(gen->app, "--samples",
                                  [](RunConfig& c, const std::size_t& v) { c.synthetic.samples = v; },
                                  "number of samples");
  gen->overrides.add<std::size_t>(gen->app, "--families",
                                  [](RunConfig& c, const std::size_t& v) { c.synthetic.families = v; },
                                  "number of architecture families");
  gen->overrides.add<double>(gen->app, "--noise", [](RunConfig& c, const double& v) { c.synthetic.noise_sigma = v; },
                             "log-normal noise sigma");
  gen->overrides.add<std::size_t>(gen->app, "--extra-platforms",
                                  [](RunConfig& c, const std::size_t& v) { c.synthetic.extra_platforms = v; },
                                  "add this many random synthetic generations to the catalog");
  gen->overrides.add<std::string>(gen->app, "--platforms", set(&RunConfig::platforms),
                                  "platform catalog (default: built-in)");

  Sub* tr = make("train", "train a model from scratch");
  add_common_flags(tr->app, tr->overrides);
  add_data_flags(tr->app, tr->overrides);
  add_model_flags(tr->app, tr->overrides);
  add_hyper_flags(tr->app, tr->overrides, false);
  tr->overrides.add<std::string>(tr->app, "--eval-data", set(&RunConfig::eval_dataset), "held-out dataset JSONL");

  Sub* ft = make("finetune", "continue training from a checkpoint");
  add_common_flags(ft->app, ft->overrides);
  add_data_flags(ft->app, ft->overrides);
  add_hyper_flags(ft->app, ft->overrides, true);
  ft->overrides.add<std::string>(ft->app, "--checkpoint", set(&RunConfig::checkpoint), "pretrained checkpoint");
  ft->overrides.add<std::string>(ft->app, "--eval-data", set(&RunConfig::eval_dataset), "held-out dataset JSONL");

  Sub* ev = make("eval", "report MAPE, Acc(10%) and Kendall tau");
  add_common_flags(ev->app, ev->overrides);
  add_data_flags(ev->app, ev->overrides);
  ev->overrides.add<std::string>(ev->app, "--checkpoint", set(&RunConfig::checkpoint), "model checkpoint");
  ev->overrides.add<std::string>(ev->app, "--side", set(&RunConfig::split_side), "split side to score: train|test");

  Sub* pr = make("predict", "predict one architecture or a dataset");
  add_common_flags(pr->app, pr->overrides);
  pr->overrides.add<std::string>(pr->app, "--checkpoint", set(&RunConfig::checkpoint), "model checkpoint");
  pr->overrides.add<std::string>(pr->app, "--arch", set(&RunConfig::arch), "architecture JSON");
  pr->overrides.add<std::string>(pr->app, "--data", set(&RunConfig::dataset), "dataset JSONL");
  pr->overrides.add<std::string>(pr->app, "--platforms", set(&RunConfig::platforms), "platform JSON file");
  pr->overrides.add<std::string>(pr->app, "--platform", set(&RunConfig::platform_id), "platform_id to predict on");

  Sub* dump = make("dump", "print masks, templates or embeddings of an architecture");
  std::string dump_what;
  dump->app->add_option("what", dump_what, "masks | templates | embeddings")->required();
  dump->overrides.add<std::string>(dump->app, "--arch", set(&RunConfig::arch), "architecture JSON");
  dump->overrides.add<std::string>(dump->app, "--platforms", set(&RunConfig::platforms), "platform JSON file");
  dump->overrides.add<std::string>(dump->app, "--platform", set(&RunConfig::platform_id), "platform_id");
  dump->overrides.add<std::string>(dump->app, "--checkpoint", set(&RunConfig::checkpoint),
                                   "encode with this model's encoder");
  dump->overrides.add<std::string>(dump->app, "--encoder", [](RunConfig& c, const std::string& v) {
    c.model.encoder.kind = parse_encoder_kind(v);
  }, "encoder kind when no checkpoint is given (hash only)");
  dump->overrides.add<std::size_t>(dump->app, "--d-model", [](RunConfig& c, const std::size_t& v) {
    c.model.dgsa.d_model = v;
    c.model.encoder.d_model = v;
  }, "embedding width when no checkpoint is given");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    for (const auto& s : subs) {
      if (!s->app->parsed()) continue;
      cfg.command = s->app->get_name();
      try {
        s->overrides.apply(cfg);
        cfg.model.validate();
      } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
      }
      if (s.get() == gen) cmd_gen_synthetic(cfg, out);
      if (s.get() == tr) cmd_train(cfg, out);
      if (s.get() == ft) cmd_finetune(cfg, out);
      if (s.get() == ev) cmd_eval(cfg, out);
      if (s.get() == pr) cmd_predict(cfg, out);
      if (s.get() == dump) cmd_dump(cfg, dump_what, out);
    }
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TrainingError& e) {
    err << "training failed: " << e.what() << "\n";
    return kExitTraining;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace archpred
