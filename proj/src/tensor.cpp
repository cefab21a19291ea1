#include "stripnet/tensor.hpp"

#include <algorithm>

#include "stripnet/errors.hpp"

namespace stripnet {

std::string Shape4::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

namespace {
void check_shape(const Shape4& s) {
  if (s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0) {
    throw ContractViolation("tensor dims must be >= 1, got " + s.str());
  }
}
}  // namespace

template <class T>
Tensor<T>::Tensor(Shape4 shape, T fill) : shape_(shape) {
  check_shape(shape_);
  data_.assign(shape_.numel(), fill);
}

template <class T>
Tensor<T>::Tensor(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_.numel()) {
    throw ContractViolation("tensor data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape_.str());
  }
}

template <class T>
T Tensor<T>::item() const {
  if (data_.size() != 1) throw ContractViolation("item() on non-scalar tensor " + shape_.str());
  return data_[0];
}

template <class T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace stripnet
