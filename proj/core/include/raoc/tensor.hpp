#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace raoc {

// Row-major dense tensor (NCHW for feature maps, NF for vectors).
// Storage is over-aligned so vectorized reductions see the same alignment on
// every run, which keeps results bit-reproducible.
template <typename T>
class Tensor {
 public:
  using Storage = std::vector<T, Eigen::aligned_allocator<T>>;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape, T fill = T(0));
  Tensor(std::initializer_list<int> shape, T fill = T(0))
      : Tensor(std::vector<int>(shape), fill) {}

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return {data_.data(), data_.size()}; }
  std::span<const T> values() const { return {data_.data(), data_.size()}; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // 4-D accessor (n, c, h, w).
  T& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  // Number of elements per leading-axis slice.
  std::size_t slice_size() const { return shape_.empty() ? 0 : data_.size() / shape_[0]; }
  T* slice(int n) { return data_.data() + static_cast<std::size_t>(n) * slice_size(); }
  const T* slice(int n) const { return data_.data() + static_cast<std::size_t>(n) * slice_size(); }

  void fill(T value);
  void set_zero() { fill(T(0)); }
  Tensor reshaped(std::vector<int> shape) const;

  // Element-wise conversion to another scalar type.
  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool all_finite() const;
  std::string shape_string() const;

 private:
  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  std::vector<int> shape_;
  Storage data_;
};

std::string shape_to_string(const std::vector<int>& shape);
std::size_t shape_volume(const std::vector<int>& shape);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace raoc
