#include "stripnet/loss.hpp"

#include <algorithm>
#include <cmath>

#include "stripnet/errors.hpp"
#include "stripnet/kernels.hpp"

namespace stripnet {

namespace {
void check_shapes(const Shape4& a, const Shape4& b, const char* op) {
  if (!(a == b)) throw ContractViolation(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

template <class T>
void accumulate(MetricTotals& m, std::span<const T> prob, std::span<const T> target, double threshold) {
  if (prob.size() != target.size()) throw ContractViolation("metrics: size mismatch");
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double p = static_cast<double>(prob[i]);
    const double y = static_cast<double>(target[i]);
    const double pc = std::clamp(p, kernels::kBceClamp, 1.0 - kernels::kBceClamp);
    m.bce_sum -= y * std::log(pc) + (1.0 - y) * std::log1p(-pc);
    const bool predicted = p >= threshold;
    const bool actual = y >= 0.5;
    m.correct += predicted == actual;
    m.pred_positive += predicted;
    m.target_positive += actual;
    m.overlap += predicted && actual;
  }
  m.count += prob.size();
}
}  // namespace

template <class T>
double bce_loss(const Tensor<T>& prob, const Tensor<T>& target) {
  return kernels::bce(prob, target);
}

template <class T>
double pixel_accuracy(const Tensor<T>& pred, const Tensor<T>& target, double threshold) {
  check_shapes(pred.shape(), target.shape(), "pixel_accuracy");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    correct += (static_cast<double>(pred[i]) >= threshold) == (static_cast<double>(target[i]) >= 0.5);
  }
  return static_cast<double>(correct) / static_cast<double>(pred.numel());
}

template double bce_loss(const Tensor<float>&, const Tensor<float>&);
template double bce_loss(const Tensor<double>&, const Tensor<double>&);
template double pixel_accuracy(const Tensor<float>&, const Tensor<float>&, double);
template double pixel_accuracy(const Tensor<double>&, const Tensor<double>&, double);

double dice_coefficient(std::span<const double> pred_binary, std::span<const double> target) {
  if (pred_binary.size() != target.size()) throw ContractViolation("dice_coefficient: size mismatch");
  std::size_t p = 0, t = 0, both = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const bool a = pred_binary[i] >= 0.5, b = target[i] >= 0.5;
    p += a;
    t += b;
    both += a && b;
  }
  if (p + t == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + t);
}

void MetricTotals::add(std::span<const float> prob, std::span<const float> target, double threshold) {
  accumulate(*this, prob, target, threshold);
}

void MetricTotals::add(std::span<const double> prob, std::span<const double> target, double threshold) {
  accumulate(*this, prob, target, threshold);
}

double MetricTotals::dice() const {
  if (pred_positive + target_positive == 0) return 1.0;
  return 2.0 * static_cast<double>(overlap) / static_cast<double>(pred_positive + target_positive);
}

}  // namespace stripnet
