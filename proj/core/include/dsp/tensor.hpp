#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsp {

using Shape = std::vector<int>;

inline std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::invalid_argument("negative extent in shape");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

/// Dense N-dimensional array of scalars, row-major with the last axis fastest.
/// Float for the production engine; double for gradient-check builds.
template <class S>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(Shape shape, S fill = S(0))
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  TensorT(Shape shape, std::vector<S> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != shape_size(shape_))
      throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_str(shape_));
  }

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(i); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::vector<S>& vec() { return data_; }
  const std::vector<S>& vec() const { return data_; }

  S& operator[](std::int64_t i) { return data_[i]; }
  S operator[](std::int64_t i) const { return data_[i]; }

  // 3D index [a,b,c]
  S& at(int a, int b, int c) {
    return data_[(static_cast<std::int64_t>(a) * shape_[1] + b) * shape_[2] + c];
  }
  S at(int a, int b, int c) const {
    return data_[(static_cast<std::int64_t>(a) * shape_[1] + b) * shape_[2] + c];
  }
  // 2D index [a,b]
  S& at(int a, int b) { return data_[static_cast<std::int64_t>(a) * shape_[1] + b]; }
  S at(int a, int b) const { return data_[static_cast<std::int64_t>(a) * shape_[1] + b]; }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> out(shape_);
    for (std::int64_t i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (S v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool requires_grad = false;

 private:
  Shape shape_;
  std::vector<S> data_;
};

using Tensor = TensorT<float>;

}  // namespace dsp
