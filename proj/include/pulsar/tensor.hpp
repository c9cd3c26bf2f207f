#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pulsar/errors.hpp"

namespace pulsar {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor. The handle has value semantics but shares its
// storage, so copies alias the same buffer; clone() makes a deep copy.
// Scalar type is double by default, float is used for faster training.
template <class S>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(Shape shape, S fill = S(0), bool requires_grad = false)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<S>>(shape_numel(shape_), fill)),
        requires_grad_(requires_grad) {}

  TensorT(Shape shape, std::vector<S> values, bool requires_grad = false)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<S>>(std::move(values))),
        requires_grad_(requires_grad) {
    if (data_->size() != shape_numel(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_->size()) +
                       " does not match shape " + shape_str(shape_));
  }

  static TensorT zeros(Shape shape) { return TensorT(std::move(shape)); }
  static TensorT ones(Shape shape) { return TensorT(std::move(shape), S(1)); }
  static TensorT scalar(S v) { return TensorT(Shape{1}, std::vector<S>{v}); }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_ ? data_->size() : 0; }

  S* data() { return data_->data(); }
  const S* data() const { return data_->data(); }
  std::vector<S>& vec() { return *data_; }
  const std::vector<S>& vec() const { return *data_; }

  bool requires_grad() const { return requires_grad_; }
  TensorT& set_requires_grad(bool v) {
    requires_grad_ = v;
    return *this;
  }

  // Identity of the underlying buffer; used by the tape to key gradients.
  const void* key() const { return data_ ? static_cast<const void*>(data_.get()) : nullptr; }

  S item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape_));
    return (*data_)[0];
  }

  S& at(std::initializer_list<int> idx) { return (*data_)[flat_index(idx)]; }
  S at(std::initializer_list<int> idx) const { return (*data_)[flat_index(idx)]; }

  TensorT clone() const {
    TensorT out;
    out.shape_ = shape_;
    out.data_ = data_ ? std::make_shared<std::vector<S>>(*data_) : nullptr;
    out.requires_grad_ = requires_grad_;
    return out;
  }

  void fill(S v) { std::fill(data_->begin(), data_->end(), v); }

  bool all_finite() const {
    for (S v : *data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

 private:
  std::size_t flat_index(std::initializer_list<int> idx) const {
    if (idx.size() != shape_.size()) throw ShapeError("index rank mismatch");
    std::size_t flat = 0;
    auto it = idx.begin();
    for (std::size_t d = 0; d < shape_.size(); ++d, ++it) flat = flat * static_cast<std::size_t>(shape_[d]) + static_cast<std::size_t>(*it);
    return flat;
  }

  Shape shape_;
  std::shared_ptr<std::vector<S>> data_;
  bool requires_grad_ = false;
};

using Tensor = TensorT<double>;
using TensorF = TensorT<float>;

}  // namespace pulsar
