#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "contrawr/errors.hpp"
#include "contrawr/model.hpp"

namespace contrawr {

struct AdamConfig {
  double learning_rate = 2e-4;
  double weight_decay = 1e-4;  // classic L2-in-gradient coupling
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment buffers aligned with a fixed parameter ordering.
template <typename S>
struct AdamState {
  std::vector<std::vector<S>> m;
  std::vector<std::vector<S>> v;
  std::uint64_t step = 0;

  void reset(const std::vector<Param<S>*>& params) {
    m.clear();
    v.clear();
    for (const Param<S>* p : params) {
      m.emplace_back(p->value.size(), S(0));
      v.emplace_back(p->value.size(), S(0));
    }
    step = 0;
  }
};

// Bias-corrected Adam over the trainable parameters; weight decay enters
// the gradient (not the update) as plain L2.
template <typename S>
void adam_step(const std::vector<Param<S>*>& params, AdamState<S>& state,
               const AdamConfig& config) {
  if (state.m.size() != params.size()) throw contract_error("adam: state not initialized");
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<S>& p = *params[i];
    if (!p.trainable) continue;
    std::vector<S>& m = state.m[i];
    std::vector<S>& v = state.v[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = static_cast<double>(p.grad[j]) +
                       config.weight_decay * static_cast<double>(p.value[j]);
      const double mj = config.beta1 * static_cast<double>(m[j]) + (1.0 - config.beta1) * g;
      const double vj =
          config.beta2 * static_cast<double>(v[j]) + (1.0 - config.beta2) * g * g;
      m[j] = static_cast<S>(mj);
      v[j] = static_cast<S>(vj);
      const double update =
          config.learning_rate * (mj / bc1) / (std::sqrt(vj / bc2) + config.epsilon);
      p.value[j] = static_cast<S>(static_cast<double>(p.value[j]) - update);
    }
  }
}

}  // namespace contrawr
