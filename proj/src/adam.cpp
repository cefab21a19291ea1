#include "stripnet/adam.hpp"

#include <cmath>

#include "stripnet/errors.hpp"

namespace stripnet {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(decay >= 0.0)) throw ConfigError("decay must be non-negative");
}

double effective_lr(std::uint64_t t, const AdamConfig& cfg) {
  return cfg.learning_rate / (1.0 + cfg.decay * static_cast<double>(t));
}

template <class T>
AdamState<T> make_adam_state(std::span<const Parameter<T>> params) {
  AdamState<T> s;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.shape());
    s.v.emplace_back(p.value.shape());
  }
  return s;
}

template <class T>
void adam_step(std::span<Parameter<T>> params, AdamState<T>& state, const AdamConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractViolation("adam_step: optimizer state does not match parameter list");
  }
  for (const auto& p : params) {
    if (!p.trainable) continue;
    for (std::size_t i = 0; i < p.grad.numel(); ++i) {
      if (!std::isfinite(static_cast<double>(p.grad[i]))) {
        throw NumericError("non-finite gradient in parameter '" + p.name + "' at index " + std::to_string(i));
      }
    }
  }
  const double lr = effective_lr(state.t, cfg);
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T one_b1 = static_cast<T>(1.0 - cfg.beta1), one_b2 = static_cast<T>(1.0 - cfg.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter<T>& p = params[k];
    if (!p.trainable) continue;
    T* theta = p.value.data();
    const T* g = p.grad.data();
    T* m = state.m[k].data();
    T* v = state.v[k].data();
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      m[i] = b1 * m[i] + one_b1 * g[i];
      v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
      const double m_hat = static_cast<double>(m[i]) / correction1;
      const double v_hat = static_cast<double>(v[i]) / correction2;
      theta[i] = static_cast<T>(static_cast<double>(theta[i]) - lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
}

template AdamState<float> make_adam_state(std::span<const Parameter<float>>);
template AdamState<double> make_adam_state(std::span<const Parameter<double>>);
template void adam_step(std::span<Parameter<float>>, AdamState<float>&, const AdamConfig&);
template void adam_step(std::span<Parameter<double>>, AdamState<double>&, const AdamConfig&);

}  // namespace stripnet
