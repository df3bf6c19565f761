#pragma once

#include <string>
#include <vector>

#include "raoc/layers.hpp"
#include "raoc/tensor.hpp"

namespace raoc {

// Local relative self-attention over 2-D feature maps.
//
// Each position (i, j) attends to the k x k grid centred on it. The grid is
// clipped at the map borders and the softmax is taken over the surviving
// neighbours only. Queries, keys and values are convolutions of the input
// (1 x 1 by default, i.e. a per-position linear map).
struct AttentionConfig {
  int in_channels = 1;
  int out_channels = 1;
  int neighborhood = 5;
  int projection_kernel = 1;
  bool projection_bias = true;

  void validate() const;
  int radius() const { return neighborhood / 2; }
  int slots() const { return neighborhood * neighborhood; }
};

// Query/key/value weights are shaped (out_channels, in_channels, p, p).
// Bias tensors are empty when the projections have no bias.
template <typename T>
struct AttentionParams {
  Tensor<T> query_weights;
  Tensor<T> key_weights;
  Tensor<T> value_weights;
  Tensor<T> query_bias;
  Tensor<T> key_bias;
  Tensor<T> value_bias;

  static AttentionParams zeros(const AttentionConfig& config);
  void validate(const AttentionConfig& config) const;
};

// Intermediate values of one forward call. Projections are stored
// position-major, (N, H*W, out_channels); weights are (N, H*W, k*k) with
// zeros in the slots clipped away at the borders.
template <typename T>
struct AttentionTrace {
  Tensor<T> queries;
  Tensor<T> keys;
  Tensor<T> values;
  Tensor<T> weights;
  int height = 0;
  int width = 0;
};

template <typename T>
struct AttentionGradients {
  Tensor<T> input;
  AttentionParams<T> params;
};

// input: (N, in_channels, H, W) -> (N, out_channels, H, W).
template <typename T>
Tensor<T> relative_attention_forward(const Tensor<T>& input, const AttentionParams<T>& params,
                                     const AttentionConfig& config,
                                     AttentionTrace<T>* trace = nullptr);

// Exact gradients of the forward map for the given upstream gradient.
template <typename T>
AttentionGradients<T> relative_attention_backward(const Tensor<T>& input,
                                                  const AttentionParams<T>& params,
                                                  const AttentionConfig& config,
                                                  const Tensor<T>& upstream_grad);

template <typename T>
class RelativeAttention final : public Layer<T> {
 public:
  explicit RelativeAttention(AttentionConfig config);

  std::string kind() const override { return "relative_attention"; }
  std::vector<int> output_shape(const std::vector<int>& input_shape) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const override;
  Tensor<T> backward(const Tensor<T>& grad_out, const Saved<T>& saved) override;
  Tensor<T> jvp(const Tensor<T>& tangent, const Saved<T>& saved) const override;
  void initialize(std::mt19937_64& rng) override;
  std::vector<Parameter<T>*> parameters() override;

  const AttentionConfig& config() const { return config_; }
  AttentionParams<T> params() const;
  void set_params(const AttentionParams<T>& params);

 private:
  AttentionConfig config_;
  Parameter<T> query_weight_;
  Parameter<T> query_bias_;
  Parameter<T> key_weight_;
  Parameter<T> key_bias_;
  Parameter<T> value_weight_;
  Parameter<T> value_bias_;
};

}  // namespace raoc
