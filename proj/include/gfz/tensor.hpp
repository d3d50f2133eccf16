#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gfz/error.hpp"

namespace gfz {

using Shape = std::vector<int>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t acc, int d) { return acc * static_cast<std::size_t>(d); });
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major array with an optional accumulated-gradient buffer.
template <typename Scalar>
class Tensor {
 public:
  using scalar_type = Scalar;

  Tensor() = default;

  explicit Tensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(checked(std::move(shape))), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<Scalar> data)
      : shape_(checked(std::move(shape))), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("tensor: data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor scalar(Scalar v) { return Tensor(Shape{1}, std::vector<Scalar>{v}); }

  const Shape& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  std::span<Scalar> data() { return data_; }
  std::span<const Scalar> data() const { return data_; }
  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }

  Eigen::Map<VectorX<Scalar>> vec() { return {data_.data(), static_cast<Eigen::Index>(data_.size())}; }
  Eigen::Map<const VectorX<Scalar>> vec() const {
    return {data_.data(), static_cast<Eigen::Index>(data_.size())};
  }

  bool has_grad() const { return grad_.has_value(); }

  /// Allocates a zero gradient buffer if none exists.
  std::span<Scalar> ensure_grad() {
    if (!grad_) grad_.emplace(data_.size(), Scalar(0));
    return *grad_;
  }
  std::span<Scalar> grad() { return grad_ ? std::span<Scalar>(*grad_) : std::span<Scalar>(); }
  std::span<const Scalar> grad() const {
    return grad_ ? std::span<const Scalar>(*grad_) : std::span<const Scalar>();
  }

  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), Scalar(0));
  }
  void drop_grad() { grad_.reset(); }

  /// Same shape and bit-identical values (gradients ignored).
  bool same_values(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

  template <typename To>
  Tensor<To> cast() const {
    std::vector<To> out(data_.begin(), data_.end());
    return Tensor<To>(shape_, std::move(out));
  }

 private:
  static Shape checked(Shape shape) {
    if (shape.empty()) throw ShapeError("tensor: empty shape");
    for (int d : shape) {
      if (d <= 0) throw ShapeError("tensor: non-positive dimension in " + shape_string(shape));
    }
    return shape;
  }

  Shape shape_;
  std::vector<Scalar> data_;
  std::optional<std::vector<Scalar>> grad_;
};

using TensorF = Tensor<float>;

}  // namespace gfz
