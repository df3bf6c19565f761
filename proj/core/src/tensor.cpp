#include "raoc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "raoc/errors.hpp"

namespace raoc {

std::string_view to_string(ErrorClass cls) {
  switch (cls) {
    case ErrorClass::kData: return "DATA";
    case ErrorClass::kConfig: return "CONFIG";
    case ErrorClass::kNumeric: return "NUMERIC";
    case ErrorClass::kIo: return "IO";
  }
  return "UNKNOWN";
}

std::size_t shape_volume(const std::vector<int>& shape) {
  std::size_t volume = 1;
  for (int d : shape) {
    if (d < 0) throw ConfigError("negative tensor dimension in " + shape_to_string(shape));
    volume *= static_cast<std::size_t>(d);
  }
  return volume;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(std::vector<int> shape, T fill)
    : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(std::vector<int> shape) const {
  if (shape_volume(shape) != data_.size()) {
    throw ConfigError("cannot reshape " + shape_string() + " to " + shape_to_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
std::string Tensor<T>::shape_string() const {
  return shape_to_string(shape_);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace raoc
