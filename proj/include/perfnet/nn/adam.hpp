#pragma once

#include <cmath>
#include <cstdint>

#include "perfnet/nn/params.hpp"

namespace perfnet::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::uint64_t step = 0;
  ParamSet<T> m;
  ParamSet<T> v;
  bool operator==(const AdamState&) const = default;
};

template <typename T>
AdamState<T> adam_init(const ParamSet<T>& params) {
  return {0, params.zeros_like(), params.zeros_like()};
}

/// One bias-corrected Adam update, in place.
template <typename T>
void adam_step(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& state, const AdamConfig& cfg) {
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(cfg.learning_rate / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(cfg.epsilon);
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto w = params.data(t);
    auto g = grads.data(t);
    auto m = state.m.data(t);
    auto v = state.v.data(t);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
    }
  }
}

}  // namespace perfnet::nn
