#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "archpred/autograd.hpp"
#include "archpred/dataset.hpp"
#include "archpred/metrics.hpp"
#include "archpred/model.hpp"
#include "archpred/optim.hpp"
#include "archpred/random.hpp"

namespace archpred {

struct TrainHyper {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  /// Sets the latency head bias to the mean log target before the first step.
  bool init_head_bias = true;
  /// Cosine decay from lr to lr * lr_floor over all steps; off keeps lr fixed.
  bool cosine_decay = true;
  double lr_floor = 0.02;
  /// Worker threads for evaluation passes; training itself is sequential.
  std::size_t threads = 1;
};

inline double scheduled_lr(const TrainHyper& h, std::size_t step, std::size_t total_steps) {
  if (!h.cosine_decay || total_steps <= 1) return h.lr;
  const double progress = double(step) / double(total_steps - 1);
  return h.lr * (h.lr_floor + (1.0 - h.lr_floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

inline constexpr double kFinetuneLr = 1e-4;

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<MetricsReport> eval;
};

inline constexpr const char* kLogHeader = "epoch,train_loss,eval_mape,eval_acc10,eval_tau";

inline void write_log_csv(const std::vector<EpochLog>& log, std::ostream& out) {
  out << kLogHeader << '\n';
  for (const auto& e : log) {
    out << e.epoch << ',' << format_number(e.train_loss) << ',';
    if (e.eval) {
      out << format_number(e.eval->mape_pct) << ',' << format_number(e.eval->acc_at_10_pct) << ',';
      if (e.eval->kendall_tau) out << format_number(*e.eval->kendall_tau);
    } else {
      out << ",,";
    }
    out << '\n';
  }
}

inline void write_log_csv(const std::vector<EpochLog>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write log " + path);
  write_log_csv(log, out);
}

/// Vocabulary over every template the dataset and the platform catalog can
/// produce, so a platform never seen in training still tokenizes.
inline Vocabulary build_vocabulary(const Dataset& ds, const PlatformCatalog& catalog = {}) {
  std::vector<TemplateString> corpus;
  for (const auto& s : ds.samples) {
    for (const auto& node : s.graph.nodes()) corpus.push_back(render_node_template(node));
    corpus.push_back(render_platform_template(s.platform));
  }
  for (const auto& p : catalog) corpus.push_back(render_platform_template(p));
  corpus.push_back(render_platform_template(pseudo_platform()));
  for (const auto& schema : OpVocabulary::standard().ops()) {
    corpus.push_back(TemplateString(to_string(schema.category) + " " + schema.name));
  }
  return Vocabulary::build(corpus);
}

// ---------------------------------------------------------------------------
// Evaluation

inline std::vector<PreparedSample> prepare_all(const Model& model, const Dataset& ds) {
  std::vector<PreparedSample> out;
  out.reserve(ds.size());
  for (const auto& s : ds.samples) out.push_back(model.prepare(s.graph, s.platform));
  return out;
}

/// Predictions in dataset order. Each sample is independent, so the result
/// does not depend on `threads`.
inline std::vector<double> predict_all(const Model& model, const Dataset& ds, std::size_t threads = 1) {
  std::vector<double> preds(ds.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < ds.size(); i += step) {
      const Sample& s = ds.samples[i];
      preds[i] = model.predict(s.graph, s.platform);
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, ds.size()));
  if (threads == 1) {
    work(0, 1);
    return preds;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        work(t, threads);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return preds;
}

inline std::vector<double> targets_of(const Dataset& ds) {
  std::vector<double> t;
  t.reserve(ds.size());
  for (const auto& s : ds.samples) t.push_back(s.target.value);
  return t;
}

/// Metrics over `ds` given its predictions, with a per-family breakdown.
inline MetricsReport report_for(const Dataset& ds, const std::vector<double>& preds) {
  const std::vector<double> targets = targets_of(ds);
  MetricsReport r = compute_metrics(preds, targets);
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_family;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& [p, t] = by_family[ds.samples[i].family];
    p.push_back(preds[i]);
    t.push_back(targets[i]);
  }
  if (by_family.size() > 1) {
    for (const auto& [family, pt] : by_family) r.per_family[family] = compute_metrics(pt.first, pt.second);
  }
  return r;
}

inline MetricsReport evaluate(const Model& model, const Dataset& ds, std::size_t threads = 1) {
  if (ds.empty()) throw ContractError("cannot evaluate on an empty dataset");
  return report_for(ds, predict_all(model, ds, threads));
}

// ---------------------------------------------------------------------------
// Training

/// Called after every epoch; returning false stops training early.
using EpochCallback = std::function<bool(const EpochLog&)>;

namespace detail {

inline double mean_log_target(const Dataset& ds) {
  double s = 0.0;
  for (const auto& x : ds.samples) s += std::log(x.target.value);
  return s / double(ds.size());
}

inline double mean_target(const Dataset& ds) {
  double s = 0.0;
  for (const auto& x : ds.samples) s += x.target.value;
  return s / double(ds.size());
}

inline std::vector<EpochLog> run_training(Model& model, const Dataset& train_ds, const TrainHyper& hyper,
                                          const Dataset* eval_ds, const EpochCallback& on_epoch) {
  if (train_ds.empty()) throw ContractError("training set is empty");
  if (hyper.batch_size == 0) throw ContractError("batch_size must be positive");
  if (!(hyper.lr > 0.0)) throw ContractError("learning rate must be positive");
  for (const auto& s : train_ds.samples) {
    validate_target(s.target);
    if (s.target.kind != model.config().task) throw ContractError("sample task does not match the model task");
  }

  const std::vector<PreparedSample> prepared = prepare_all(model, train_ds);
  ParamStore& params = model.params();
  AdamHyper ah;
  ah.lr = hyper.lr;
  AdamState adam(params, ah);
  Gradients grads(params);
  Rng rng(hyper.seed);
  std::vector<std::size_t> order(train_ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t batches = (order.size() + hyper.batch_size - 1) / hyper.batch_size;
  const std::size_t total_steps = batches * hyper.epochs;
  std::size_t step = 0;

  std::vector<EpochLog> log;
  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    try {
      for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
        const std::size_t end = std::min(order.size(), start + hyper.batch_size);
        grads.zero();
        for (std::size_t k = start; k < end; ++k) {
          const Sample& s = train_ds.samples[order[k]];
          Tape tape;
          Var l = loss(model.forward(tape, prepared[order[k]], s.graph, s.platform), s.target);
          loss_sum += l.value().item();
          tape.backward_into(l, grads);
        }
        grads.scale(1.0 / double(end - start));
        adam.hyper.lr = scheduled_lr(hyper, step++, total_steps);
        adam_step(params, grads, adam);
      }
    } catch (const NumericError& e) {
      throw TrainingError(std::string("training diverged: ") + e.what(), epoch);
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / double(train_ds.size());
    if (!std::isfinite(entry.train_loss)) throw TrainingError("training loss is not finite", epoch);
    if (eval_ds && !eval_ds->empty()) {
      try {
        entry.eval = evaluate(model, *eval_ds, hyper.threads);
      } catch (const NumericError& e) {
        throw TrainingError(std::string("evaluation diverged: ") + e.what(), epoch);
      }
    }
    log.push_back(entry);
    if (on_epoch && !on_epoch(log.back())) break;
  }
  return log;
}

}  // namespace detail

/// Mini-batch Adam over seeded shuffles. Gradients are averaged over each
/// batch; the per-epoch log holds the mean training loss and, when an eval
/// set is given, its metrics. Deterministic in hyper.seed.
inline std::vector<EpochLog> train(Model& model, const Dataset& train_ds, const TrainHyper& hyper,
                                   const Dataset* eval_ds = nullptr, const EpochCallback& on_epoch = {}) {
  if (hyper.init_head_bias && !train_ds.empty()) {
    model.set_head_bias(model.config().task == TaskKind::latency ? detail::mean_log_target(train_ds)
                                                                 : detail::mean_target(train_ds));
  }
  return detail::run_training(model, train_ds, hyper, eval_ds, on_epoch);
}

/// Same loop as train(), starting from the given model's parameters and
/// never touching the head bias. Zero epochs leaves the model unchanged.
inline std::vector<EpochLog> finetune(Model& model, const Dataset& finetune_ds, TrainHyper hyper,
                                      const Dataset* eval_ds = nullptr, const EpochCallback& on_epoch = {}) {
  hyper.init_head_bias = false;
  if (hyper.epochs == 0) return {};
  return detail::run_training(model, finetune_ds, hyper, eval_ds, on_epoch);
}

/// Default hyperparameters for finetuning.
inline TrainHyper finetune_defaults() {
  TrainHyper h;
  h.lr = kFinetuneLr;
  h.init_head_bias = false;
  return h;
}

}  // namespace archpred
