#pragma once

#include <cstdint>
#include <vector>

#include "raoc/layers.hpp"

namespace raoc {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment gradient descent with bias correction and no weight decay.
// Holds non-owning pointers; the parameters must outlive the optimizer.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, AdamConfig config);

  void step();
  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Parameter<T>*> params_;
  AdamConfig config_;
  std::vector<Tensor<T>> first_;
  std::vector<Tensor<T>> second_;
  std::int64_t steps_ = 0;
};

}  // namespace raoc
