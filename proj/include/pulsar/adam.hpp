#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pulsar/errors.hpp"
#include "pulsar/tensor.hpp"

namespace pulsar {

// Bias-corrected Adam. Moment buffers are keyed positionally, so the caller
// must pass parameters in a stable order.
template <class S>
struct AdamStateT {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  std::vector<std::vector<S>> m;
  std::vector<std::vector<S>> v;
};

template <class S>
void adam_step(std::vector<TensorT<S>>& params, const std::vector<std::vector<S>>& grads, AdamStateT<S>& state) {
  if (state.lr <= 0.0) throw ConfigError("adam: learning rate must be positive");
  if (params.size() != grads.size()) throw ShapeError("adam: parameter/gradient count mismatch");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].size(), S(0));
      state.v[i].assign(params[i].size(), S(0));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam: state does not match parameter count");

  ++state.step_count;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));

  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].size() || state.m[i].size() != params[i].size())
      throw ShapeError("adam: shape mismatch for parameter " + std::to_string(i));
    S* p = params[i].data();
    S* m = state.m[i].data();
    S* v = state.v[i].data();
    const S* g = grads[i].data();
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      if (!std::isfinite(gj)) throw NumericError("adam: non-finite gradient for parameter " + std::to_string(i));
      const double mj = state.beta1 * static_cast<double>(m[j]) + (1.0 - state.beta1) * gj;
      const double vj = state.beta2 * static_cast<double>(v[j]) + (1.0 - state.beta2) * gj * gj;
      m[j] = static_cast<S>(mj);
      v[j] = static_cast<S>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      p[j] = static_cast<S>(static_cast<double>(p[j]) - state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

using AdamState = AdamStateT<double>;

}  // namespace pulsar
