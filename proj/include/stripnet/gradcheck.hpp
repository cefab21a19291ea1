#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stripnet/autodiff.hpp"

namespace stripnet {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  double step = 1e-3;
  double tol = 1e-4;
  /// Coordinates sampled per parameter tensor (capped at its size).
  std::size_t samples_per_tensor = 8;
};

struct GradcheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::size_t checked = 0;
  /// "name[flat index]" of the worst coordinate.
  std::string worst;
};

/// |a - n| / max(1, |a|, |n|)
double relative_error(double analytic, double numeric);

/// Builds a scalar loss on the given tape. It must bind every checked
/// parameter with Tape::parameter() so backward() reaches it.
using LossBuilder = std::function<Var(Tape<double>&)>;

/// Compares backward() against central differences on randomly sampled
/// coordinates of each parameter. Parameters are restored afterwards.
GradcheckReport gradcheck(const LossBuilder& loss, std::span<Parameter<double>* const> params,
                          const GradcheckOptions& options = {});

}  // namespace stripnet

namespace stripnet {

struct GradcheckCase {
  std::string name;
  std::uint64_t seed = 0;
  GradcheckReport report;
};

/// Every differentiable primitive (conv2d, conv2d_transpose, maxpool2,
/// concat, relu, sigmoid, bce, bce_with_logits) and a depth-2 toy U-Net of
/// each architecture on a 1x1x16x16 input, once per seed in
/// [first_seed, first_seed + seeds). Primitive inputs keep ReLU kinks and
/// max-pool ties farther away than the step. Inside a network that cannot be
/// arranged, so the U-Net cases use the smaller network_step.
std::vector<GradcheckCase> gradcheck_suite(std::uint64_t first_seed, std::size_t seeds,
                                           const GradcheckOptions& options = {}, double network_step = 1e-7);

}  // namespace stripnet
