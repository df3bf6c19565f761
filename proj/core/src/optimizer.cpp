#include "raoc/optimizer.hpp"

#include <cmath>

#include "raoc/errors.hpp"

namespace raoc {

template <typename T>
Adam<T>::Adam(std::vector<Parameter<T>*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 || config_.beta2 >= 1.0) {
    throw ConfigError("adam decay rates must lie in [0, 1)");
  }
  for (const Parameter<T>* p : params_) {
    first_.emplace_back(p->value.shape());
    second_.emplace_back(p->value.shape());
  }
}

template <typename T>
void Adam<T>::step() {
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  const T step_size = static_cast<T>(config_.learning_rate * std::sqrt(c2) / c1);
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T eps = static_cast<T>(config_.epsilon * std::sqrt(c2));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<T>& value = params_[i]->value;
    const Tensor<T>& grad = params_[i]->grad;
    Tensor<T>& m = first_[i];
    Tensor<T>& v = second_[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const T g = grad[j];
      m[j] = b1 * m[j] + (1 - b1) * g;
      v[j] = b2 * v[j] + (1 - b2) * g * g;
      value[j] -= step_size * m[j] / (std::sqrt(v[j]) + eps);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace raoc
