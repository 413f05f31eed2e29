#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "archpred/autograd.hpp"

namespace archpred {

/// Builds a scalar loss on the given tape from the parameters in `store`.
using LossBuilder = std::function<Var(Tape&, const ParamStore&)>;

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares backward() against central differences on every coordinate of
/// every trainable parameter. Relative error is |a - n| / max(|a|, |n|, floor);
/// the floor keeps coordinates whose true gradient is ~0 from reporting
/// roundoff as error.
inline GradcheckResult gradcheck(const LossBuilder& f, ParamStore& params, double eps = 1e-5, double floor = 1e-6) {
  if (!(eps > 0.0)) throw ContractError("gradcheck: eps must be positive");

  auto evaluate = [&]() {
    Tape tape;
    return f(tape, params).value().item();
  };

  Gradients analytic;
  double base = 0.0;
  {
    Tape tape;
    Var loss = f(tape, params);
    base = loss.value().item();
    analytic = tape.backward(loss);
  }
  if (evaluate() != base) throw ContractError("gradcheck: loss function is not deterministic");

  GradcheckResult result;
  for (std::size_t slot = 0; slot < params.size(); ++slot) {
    Parameter& p = params[slot];
    if (!p.trainable) continue;
    for (std::size_t k = 0; k < p.value.numel(); ++k) {
      const double original = p.value[k];
      p.value[k] = original + eps;
      const double up = evaluate();
      p.value[k] = original - eps;
      const double down = evaluate();
      p.value[k] = original;

      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[slot][k];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++result.coordinates;
      if (rel > result.max_rel_error || result.coordinates == 1) {
        result.max_rel_error = rel;
        result.worst_parameter = p.name;
        result.worst_index = k;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace archpred
