#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "archpred/autograd.hpp"

namespace archpred {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  AdamState() = default;
  AdamState(const ParamStore& store, AdamHyper h) : hyper(h) {
    for (const auto& p : store) {
      first_moment.emplace_back(p.value.shape(), 0.0);
      second_moment.emplace_back(p.value.shape(), 0.0);
    }
  }
};

/// One bias-corrected Adam update of every trainable parameter.
inline void adam_step(ParamStore& params, const Gradients& grads, AdamState& state) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: parameter/gradient/state count mismatch");
  }
  const auto& h = state.hyper;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(h.beta1, t);
  const double correction2 = 1.0 - std::pow(h.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    const Tensor& g = grads[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    if (!g.same_shape(p.value) || !m.same_shape(p.value) || !v.same_shape(p.value)) {
      throw DimensionError("adam_step: shape mismatch for parameter " + p.name);
    }
    if (!p.trainable) continue;
    for (std::size_t k = 0; k < p.value.numel(); ++k) {
      m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g[k];
      v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p.value[k] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

}  // namespace archpred
