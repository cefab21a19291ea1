#pragma once

// Forward and backward kernels for the primitives the U-Nets are built from.
// All kernels are pure functions of their arguments; the tape in
// autodiff.hpp wires them together.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "stripnet/tensor.hpp"

namespace stripnet::kernels {

/// Stride-1 convolution with zero "same" padding; kernel extents must be odd.
///
/// out[n,co,y,x] = bias[co] + sum over (ci,dy,dx) in lexicographic order of
/// in[n,ci,y+dy-kh/2,x+dx-kw/2] * weight[co,ci,dy,dx]. The accumulation order
/// is part of the contract: it makes the result reproducible bit for bit.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

template <class T>
struct Conv2dGrads {
  std::optional<Tensor<T>> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <class T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                               const Tensor<T>& grad_out, bool need_input_grad);

/// 2x2 stride-2 transpose convolution; weight is [cin, cout, 2, 2].
template <class T>
Tensor<T> conv2d_transpose(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

template <class T>
Conv2dGrads<T> conv2d_transpose_backward(const Tensor<T>& input, const Tensor<T>& weight,
                                         const Tensor<T>& grad_out, bool need_input_grad);

template <class T>
struct PoolResult {
  Tensor<T> output;
  /// Flat input index chosen for each output element.
  std::vector<std::uint32_t> argmax;
};

/// Disjoint 2x2 max pooling. Ties resolve to the lowest flat index in the window.
template <class T>
PoolResult<T> maxpool2(const Tensor<T>& input);

template <class T>
Tensor<T> maxpool2_backward(const Shape4& input_shape, std::span<const std::uint32_t> argmax,
                            const Tensor<T>& grad_out);

template <class T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts);

/// Inverse of concat_channels: splits along channels with the given widths.
template <class T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& whole, std::span<const std::size_t> widths);

template <class T>
Tensor<T> relu(const Tensor<T>& x);

template <class T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out);

/// Logistic function. Results are kept strictly inside (0, 1) even where the
/// exact value rounds to 0 or 1 in T.
template <class T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <class T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out);

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy of probabilities with clamping to [1e-7, 1-1e-7].
template <class T>
double bce(const Tensor<T>& prob, const Tensor<T>& target);

/// d(bce)/d(prob); zero where the clamp is active.
template <class T>
Tensor<T> bce_backward(const Tensor<T>& prob, const Tensor<T>& target, double grad_loss);

/// Mean binary cross-entropy evaluated on logits, fused with the sigmoid.
template <class T>
double bce_with_logits(const Tensor<T>& logits, const Tensor<T>& target);

template <class T>
Tensor<T> bce_with_logits_backward(const Tensor<T>& logits, const Tensor<T>& target,
                                   double grad_loss);

}  // namespace stripnet::kernels
