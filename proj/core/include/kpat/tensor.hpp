#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kpat/error.hpp"

namespace kpat::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

using Shape = std::vector<std::size_t>;

/// Tensor storage is over-aligned so vectorized kernels take the same path
/// (and sum in the same order) wherever the buffer lands on the heap.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

std::string shape_string(const Shape& shape);

/// Dense row-major tensor. Rank 1 tensors view as a single row; rank 2 as
/// rows x cols. Higher ranks are storage-only (checkpoint round trips).
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::span<const T> data);
  Tensor(Shape shape, const std::vector<T>& data) : Tensor(std::move(shape), std::span<const T>(data)) {}
  Tensor(Shape shape, std::initializer_list<T> data) : Tensor(std::move(shape), std::span<const T>(data.begin(), data.size())) {}

  static Tensor matrix(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, const std::vector<T>& data) {
    return Tensor({rows, cols}, data);
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  AlignedVector<T>& storage() { return data_; }
  const AlignedVector<T>& storage() const { return data_; }
  std::vector<T> to_vector() const { return {data_.begin(), data_.end()}; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  MatrixMap<T> mat() { return MatrixMap<T>(data_.data(), rows(), cols()); }
  ConstMatrixMap<T> mat() const { return ConstMatrixMap<T>(data_.data(), rows(), cols()); }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::copy(data_.begin(), data_.end(), out.storage().begin());
    return out;
  }

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

/// Named trainable tensor. The gradient accumulator is mutable so forward
/// passes can run against a const model; only recording graphs write to it.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  mutable Tensor<T> grad;

  void zero_grad() const {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
    grad.fill(T(0));
  }
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace kpat::nn
