#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "dsvb/tensor.hpp"

namespace dsvb {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Array> m;  // first moments, one per parameter
  std::vector<Array> v;  // second moments
  long step_count = 0;
  AdamConfig cfg;
};

/// One Adam update with bias correction. Parameters without a gradient
/// buffer are left untouched. Throws NumericalDivergence if any updated
/// parameter stops being finite.
inline void adam_step(std::span<Tensor> params, AdamState& state, double lr) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i] = Array::Zero(params[i].size());
      state.v[i] = Array::Zero(params[i].size());
    }
  }
  if (state.m.size() != params.size())
    throw ShapeMismatch("adam_step: state tracks a different parameter list");
  ++state.step_count;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) continue;
    const Array& g = params[i].grad();
    if (state.m[i].size() != g.size())
      throw ShapeMismatch("adam_step: moment/parameter shape drift");
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g.square();
    params[i].values() -=
        lr * (state.m[i] / corr1) / ((state.v[i] / corr2).sqrt() + state.cfg.epsilon);
    if (!params[i].all_finite())
      throw NumericalDivergence("adam_step: parameter became non-finite");
  }
}

/// Owns the parameter list plus moments, and the usual step/zero_grad pair.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  explicit AdamOptimizer(std::vector<Tensor> params, double lr, AdamConfig cfg = {})
      : params_(std::move(params)), lr_(lr) {
    state_.cfg = cfg;
  }

  void step() { adam_step(params_, state_, lr_); }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  const std::vector<Tensor>& params() const { return params_; }
  double learning_rate() const { return lr_; }
  const AdamState& state() const { return state_; }

 private:
  std::vector<Tensor> params_;
  AdamState state_;
  double lr_ = 1e-3;
};

}  // namespace dsvb
