#include "stripnet/autodiff.hpp"

#include <memory>

#include "stripnet/errors.hpp"
#include "stripnet/kernels.hpp"

namespace stripnet {

template <class T>
Var Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), std::nullopt, nullptr, {}, false});
  return Var{nodes_.size() - 1};
}

template <class T>
Var Tape<T>::parameter(Parameter<T>& p) {
  if (!(p.grad.shape() == p.value.shape())) p.grad = Tensor<T>(p.value.shape());
  nodes_.push_back(Node{Tensor<T>{}, std::nullopt, &p, {}, record_ && p.trainable});
  return Var{nodes_.size() - 1};
}

template <class T>
Var Tape<T>::variable(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), std::nullopt, nullptr, {}, record_});
  return Var{nodes_.size() - 1};
}

template <class T>
Var Tape<T>::push(Tensor<T> value, std::span<const Var> parents, BackwardFn backward) {
  bool needs = false;
  for (Var p : parents) {
    if (p.index >= nodes_.size()) throw ContractViolation("tape: operand recorded after its consumer");
    needs = needs || nodes_[p.index].needs_grad;
  }
  needs = needs && record_;
  nodes_.push_back(Node{std::move(value), std::nullopt, nullptr, needs ? std::move(backward) : BackwardFn{}, needs});
  return Var{nodes_.size() - 1};
}

template <class T>
const Tensor<T>* Tape<T>::grad(Var v) const {
  const Node& n = nodes_.at(v.index);
  return n.grad ? &*n.grad : nullptr;
}

template <class T>
void Tape<T>::accumulate(Var v, const Tensor<T>& g) {
  Node& n = nodes_.at(v.index);
  if (!n.needs_grad) return;
  const Shape4& expected = value(v).shape();
  if (!(g.shape() == expected)) {
    throw ContractViolation("tape: gradient shape " + g.shape().str() + " does not match value " +
                            expected.str());
  }
  if (!n.grad) {
    n.grad = g;
    return;
  }
  T* dst = n.grad->data();
  const T* src = g.data();
  for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
}

template <class T>
void Tape<T>::backward(Var loss) {
  if (!record_) throw ContractViolation("backward: tape was created without recording");
  if (backward_done_) throw ContractViolation("backward: already called on this tape");
  Node& root = nodes_.at(loss.index);
  if (!value(loss).is_scalar()) throw ContractViolation("backward: loss must be scalar, got " + value(loss).shape().str());
  backward_done_ = true;
  if (!root.needs_grad) return;
  root.grad = Tensor<T>::scalar(T{1});
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad) continue;
    if (n.backward) {
      // The rule may append to other nodes' grads but never to its own.
      const Tensor<T> g = *n.grad;
      n.backward(*this, g);
    }
    if (n.param != nullptr) {
      T* dst = n.param->grad.data();
      const T* src = n.grad->data();
      for (std::size_t k = 0; k < n.grad->numel(); ++k) dst[k] += src[k];
    }
  }
}

template class Tape<float>;
template class Tape<double>;

namespace ops {

template <class T>
Var conv2d(Tape<T>& tape, Var input, Var weight, Var bias) {
  Tensor<T> out = kernels::conv2d(tape.value(input), tape.value(weight), tape.value(bias));
  return tape.push(std::move(out), {input, weight, bias}, [=](Tape<T>& t, const Tensor<T>& g) {
    auto grads = kernels::conv2d_backward(t.value(input), t.value(weight), g, t.needs_grad(input));
    if (grads.input) t.accumulate(input, *grads.input);
    t.accumulate(weight, grads.weight);
    t.accumulate(bias, Tensor<T>(t.value(bias).shape(), std::move(grads.bias.storage())));
  });
}

template <class T>
Var conv2d_transpose(Tape<T>& tape, Var input, Var weight, Var bias) {
  Tensor<T> out = kernels::conv2d_transpose(tape.value(input), tape.value(weight), tape.value(bias));
  return tape.push(std::move(out), {input, weight, bias}, [=](Tape<T>& t, const Tensor<T>& g) {
    auto grads = kernels::conv2d_transpose_backward(t.value(input), t.value(weight), g, t.needs_grad(input));
    if (grads.input) t.accumulate(input, *grads.input);
    t.accumulate(weight, grads.weight);
    t.accumulate(bias, Tensor<T>(t.value(bias).shape(), std::move(grads.bias.storage())));
  });
}

template <class T>
Var maxpool2(Tape<T>& tape, Var input) {
  auto pooled = kernels::maxpool2(tape.value(input));
  const Shape4 in_shape = tape.value(input).shape();
  auto routing = std::make_shared<std::vector<std::uint32_t>>(std::move(pooled.argmax));
  return tape.push(std::move(pooled.output), {input}, [=](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(input, kernels::maxpool2_backward<T>(in_shape, *routing, g));
  });
}

template <class T>
Var concat(Tape<T>& tape, std::span<const Var> parts) {
  if (parts.empty()) throw ContractViolation("concat: no operands");
  if (parts.size() == 1) return parts[0];
  std::vector<const Tensor<T>*> values;
  std::vector<std::size_t> widths;
  for (Var v : parts) {
    values.push_back(&tape.value(v));
    widths.push_back(tape.value(v).shape().c);
  }
  Tensor<T> out = kernels::concat_channels<T>(values);
  std::vector<Var> operands(parts.begin(), parts.end());
  return tape.push(std::move(out), parts, [operands, widths](Tape<T>& t, const Tensor<T>& g) {
    auto split = kernels::split_channels<T>(g, widths);
    for (std::size_t i = 0; i < operands.size(); ++i) t.accumulate(operands[i], split[i]);
  });
}

template <class T>
Var relu(Tape<T>& tape, Var x) {
  return tape.push(kernels::relu(tape.value(x)), {x}, [=](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, kernels::relu_backward(t.value(x), g));
  });
}

template <class T>
Var sigmoid(Tape<T>& tape, Var x) {
  Tensor<T> y = kernels::sigmoid(tape.value(x));
  const std::size_t self = tape.size();
  return tape.push(std::move(y), {x}, [=](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, kernels::sigmoid_backward(t.value(Var{self}), g));
  });
}

template <class T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  if (!(av.shape() == bv.shape())) throw ContractViolation("mul: shape mismatch " + av.shape().str() + " vs " + bv.shape().str());
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  return tape.push(std::move(out), {a, b}, [=](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& x = t.value(a);
    const Tensor<T>& y = t.value(b);
    Tensor<T> ga(g.shape()), gb(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga[i] = g[i] * y[i];
      gb[i] = g[i] * x[i];
    }
    t.accumulate(a, ga);
    t.accumulate(b, gb);
  });
}

template <class T>
Var sum(Tape<T>& tape, Var x) {
  const Tensor<T>& v = tape.value(x);
  T total{0};
  for (std::size_t i = 0; i < v.numel(); ++i) total += v[i];
  return tape.push(Tensor<T>::scalar(total), {x}, [=](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, Tensor<T>(t.value(x).shape(), g.item()));
  });
}

template <class T>
Var bce(Tape<T>& tape, Var prob, Var target) {
  const double loss = kernels::bce(tape.value(prob), tape.value(target));
  return tape.push(Tensor<T>::scalar(static_cast<T>(loss)), {prob}, [=](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(prob, kernels::bce_backward(t.value(prob), t.value(target), static_cast<double>(g.item())));
  });
}

template <class T>
Var bce_with_logits(Tape<T>& tape, Var logits, Var target) {
  const double loss = kernels::bce_with_logits(tape.value(logits), tape.value(target));
  return tape.push(Tensor<T>::scalar(static_cast<T>(loss)), {logits}, [=](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(logits,
                 kernels::bce_with_logits_backward(t.value(logits), t.value(target), static_cast<double>(g.item())));
  });
}

#define STRIPNET_INSTANTIATE(T)                                  \
  template Var conv2d(Tape<T>&, Var, Var, Var);                  \
  template Var conv2d_transpose(Tape<T>&, Var, Var, Var);        \
  template Var maxpool2(Tape<T>&, Var);                          \
  template Var concat(Tape<T>&, std::span<const Var>);           \
  template Var relu(Tape<T>&, Var);                              \
  template Var sigmoid(Tape<T>&, Var);                           \
  template Var mul(Tape<T>&, Var, Var);                          \
  template Var sum(Tape<T>&, Var);                               \
  template Var bce(Tape<T>&, Var, Var);                          \
  template Var bce_with_logits(Tape<T>&, Var, Var);

STRIPNET_INSTANTIATE(float)
STRIPNET_INSTANTIATE(double)

#undef STRIPNET_INSTANTIATE

}  // namespace ops
}  // namespace stripnet
