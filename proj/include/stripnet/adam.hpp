#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stripnet/autodiff.hpp"

namespace stripnet {

/// Optimizer hyperparameters; defaults are the published training values.
struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Inverse-time decay per update: lr / (1 + decay * t).
  double decay = 1.99e-7;

  void validate() const;
};

/// lr / (1 + decay * t) where t counts the updates already applied.
double effective_lr(std::uint64_t t, const AdamConfig& cfg);

template <class T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  /// Number of updates applied so far.
  std::uint64_t t = 0;
};

template <class T>
AdamState<T> make_adam_state(std::span<const Parameter<T>> params);

/// One bias-corrected Adam update of every trainable parameter from its
/// gradient. The step uses effective_lr(t) with t the count before this
/// update, then t is incremented. Throws NumericError naming the parameter
/// if any gradient is not finite; no parameter is modified in that case.
template <class T>
void adam_step(std::span<Parameter<T>> params, AdamState<T>& state, const AdamConfig& cfg);

}  // namespace stripnet
