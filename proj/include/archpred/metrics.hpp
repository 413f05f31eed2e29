#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>

#include "archpred/errors.hpp"

namespace archpred {

namespace detail {

inline void check_metric_inputs(std::span<const double> preds, std::span<const double> targets) {
  if (preds.size() != targets.size()) {
    throw ContractError("metric inputs differ in length: " + std::to_string(preds.size()) + " vs " +
                        std::to_string(targets.size()));
  }
  if (preds.empty()) throw ContractError("metric of an empty set");
  for (double t : targets) {
    if (!(t > 0.0)) throw ContractError("relative-error metrics need positive targets");
  }
}

}  // namespace detail

/// Mean absolute percentage error, in percent.
inline double mape(std::span<const double> preds, std::span<const double> targets) {
  detail::check_metric_inputs(preds, targets);
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) sum += std::abs(preds[i] - targets[i]) / targets[i];
  return 100.0 * sum / double(preds.size());
}

/// Percentage of predictions whose relative error is strictly below delta.
inline double acc_at(std::span<const double> preds, std::span<const double> targets, double delta = 0.10) {
  detail::check_metric_inputs(preds, targets);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (std::abs(preds[i] - targets[i]) / targets[i] < delta) ++hits;
  }
  return 100.0 * double(hits) / double(preds.size());
}

/// Kendall's tau-b: (C - D) / sqrt((n0 - n1)(n0 - n2)), where n1/n2 count
/// pairs tied in preds/targets. O(n^2).
inline double kendall_tau(std::span<const double> preds, std::span<const double> targets) {
  if (preds.size() != targets.size()) throw ContractError("kendall_tau inputs differ in length");
  const std::size_t n = preds.size();
  if (n < 2) throw ContractError("kendall_tau needs at least two samples");
  long long score = 0;  // concordant - discordant
  long long tied_x = 0;
  long long tied_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int sx = (preds[i] > preds[j]) - (preds[i] < preds[j]);
      const int sy = (targets[i] > targets[j]) - (targets[i] < targets[j]);
      score += sx * sy;
      tied_x += sx == 0;
      tied_y += sy == 0;
    }
  }
  const long long n0 = static_cast<long long>(n) * static_cast<long long>(n - 1) / 2;
  const double denom = std::sqrt(double(n0 - tied_x) * double(n0 - tied_y));
  if (denom == 0.0) throw ContractError("kendall_tau undefined: one side is entirely tied");
  return double(score) / denom;
}

struct MetricsReport {
  double mape_pct = 0.0;
  double acc_at_10_pct = 0.0;
  std::optional<double> kendall_tau;  // absent when undefined (n < 2 or all tied)
  std::size_t count = 0;
  std::map<std::string, MetricsReport> per_family;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline MetricsReport compute_metrics(std::span<const double> preds, std::span<const double> targets) {
  MetricsReport r;
  r.mape_pct = mape(preds, targets);
  r.acc_at_10_pct = acc_at(preds, targets, 0.10);
  r.count = preds.size();
  try {
    r.kendall_tau = kendall_tau(preds, targets);
  } catch (const ContractError&) {
    r.kendall_tau.reset();
  }
  return r;
}

}  // namespace archpred
