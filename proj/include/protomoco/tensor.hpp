#ifndef PROTOMOCO_TENSOR_HPP
#define PROTOMOCO_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "protomoco/errors.hpp"

namespace protomoco {

/// Dense n-dimensional array of Scalar, row-major, value semantics.
///
/// Shapes are lists of positive extents; a scalar is represented as shape {1}.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape)
      : shape_(std::move(shape)), data_(checked_size(shape_), Scalar(0)) {}

  Tensor(std::vector<int> shape, std::vector<Scalar> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != checked_size(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_to_string(shape_));
    }
  }

  static Tensor full(std::vector<int> shape, Scalar v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  static Tensor scalar(Scalar v) { return Tensor({1}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return data_.size(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::vector<Scalar>& storage() { return data_; }
  const std::vector<Scalar>& storage() const { return data_; }

  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }

  /// 2-D access (row-major).
  Scalar& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  Scalar at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

  /// 3-D access (channel, row, column).
  Scalar& at(int ch, int r, int c) {
    return data_[(static_cast<std::size_t>(ch) * shape_[1] + r) * shape_[2] + c];
  }
  Scalar at(int ch, int r, int c) const {
    return data_[(static_cast<std::size_t>(ch) * shape_[1] + r) * shape_[2] + c];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    for (Scalar v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  Scalar item() const {
    if (size() != 1) {
      throw ContractError("item() requires a scalar tensor, got shape " + shape_string());
    }
    return data_[0];
  }

  std::string shape_string() const { return shape_to_string(shape_); }

  static std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) os << 'x';
      os << shape[i];
    }
    os << ']';
    return os.str();
  }

 private:
  static std::size_t checked_size(const std::vector<int>& shape) {
    if (shape.empty()) {
      throw DimensionError("tensor shape must have at least one extent");
    }
    std::size_t n = 1;
    for (int e : shape) {
      if (e <= 0) {
        throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
      }
      n *= static_cast<std::size_t>(e);
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<Scalar> data_;
};

template <typename Scalar>
std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int e : shape) n *= static_cast<std::size_t>(e);
  return n;
}

}  // namespace protomoco

#endif  // PROTOMOCO_TENSOR_HPP
