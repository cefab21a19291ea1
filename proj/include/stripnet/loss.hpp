#pragma once

#include <span>

#include "stripnet/tensor.hpp"

namespace stripnet {

/// Mean of -[y ln p + (1-y) ln(1-p)] with p clamped to [1e-7, 1 - 1e-7].
template <class T>
double bce_loss(const Tensor<T>& prob, const Tensor<T>& target);

/// Fraction of elements where (pred >= threshold) equals the binary target.
template <class T>
double pixel_accuracy(const Tensor<T>& pred, const Tensor<T>& target, double threshold = 0.5);

/// 2|P and T| / (|P| + |T|) on binary inputs; 1.0 when both are empty.
double dice_coefficient(std::span<const double> pred_binary, std::span<const double> target);

/// Elementwise counts behind the metrics, for accumulating over many batches.
struct MetricTotals {
  double bce_sum = 0.0;
  std::size_t correct = 0;
  std::size_t count = 0;
  std::size_t pred_positive = 0;
  std::size_t target_positive = 0;
  std::size_t overlap = 0;

  void add(std::span<const float> prob, std::span<const float> target, double threshold = 0.5);
  void add(std::span<const double> prob, std::span<const double> target, double threshold = 0.5);

  double bce() const { return count ? bce_sum / static_cast<double>(count) : 0.0; }
  double accuracy() const { return count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0; }
  double dice() const;
};

}  // namespace stripnet
