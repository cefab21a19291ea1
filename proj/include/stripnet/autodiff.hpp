#pragma once

// Reverse-mode differentiation over rank-4 tensors.
//
// A Tape records every primitive application in execution order. Calling
// backward() on a scalar result walks the tape in reverse and accumulates
// gradients into the Parameters that were bound with Tape::parameter().

#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stripnet/tensor.hpp"

namespace stripnet {

/// Trainable tensor with a gradient buffer of identical shape.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string name_, Tensor<T> value_)
      : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T{0}); }
};

/// Handle to a tape entry.
struct Var {
  std::size_t index = 0;
};

template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  /// With recording disabled, values are computed but no backward rules are kept.
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  /// Leaf that never receives a gradient.
  Var constant(Tensor<T> value);

  /// Leaf bound to a parameter; backward() adds into parameter.grad.
  Var parameter(Parameter<T>& p);

  /// Leaf whose gradient is kept on the tape (read it with grad()).
  Var variable(Tensor<T> value);

  Var push(Tensor<T> value, std::span<const Var> parents, BackwardFn backward);
  Var push(Tensor<T> value, std::initializer_list<Var> parents, BackwardFn backward) {
    return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
  }

  const Tensor<T>& value(Var v) const {
    const Node& n = nodes_.at(v.index);
    return n.param != nullptr ? n.param->value : n.value;
  }
  bool needs_grad(Var v) const { return nodes_.at(v.index).needs_grad; }

  /// Gradient of the last backward() with respect to v, if any reached it.
  const Tensor<T>* grad(Var v) const;

  /// Adds g into the gradient slot of v (no-op when v needs no gradient).
  void accumulate(Var v, const Tensor<T>& g);

  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
    bool needs_grad = false;
  };

  bool record_;
  bool backward_done_ = false;
  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

namespace ops {

template <class T>
Var conv2d(Tape<T>& tape, Var input, Var weight, Var bias);

template <class T>
Var conv2d_transpose(Tape<T>& tape, Var input, Var weight, Var bias);

template <class T>
Var maxpool2(Tape<T>& tape, Var input);

template <class T>
Var concat(Tape<T>& tape, std::span<const Var> parts);

template <class T>
Var relu(Tape<T>& tape, Var x);

template <class T>
Var sigmoid(Tape<T>& tape, Var x);

/// Elementwise product of equally shaped tensors.
template <class T>
Var mul(Tape<T>& tape, Var a, Var b);

/// Sum of all elements, as a scalar tensor.
template <class T>
Var sum(Tape<T>& tape, Var x);

/// Clamped binary cross-entropy on probabilities; target is a constant.
template <class T>
Var bce(Tape<T>& tape, Var prob, Var target);

/// Binary cross-entropy fused with the sigmoid, evaluated on logits.
template <class T>
Var bce_with_logits(Tape<T>& tape, Var logits, Var target);

}  // namespace ops
}  // namespace stripnet
