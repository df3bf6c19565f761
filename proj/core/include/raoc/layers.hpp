#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "raoc/tensor.hpp"

namespace raoc {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowMatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstRowMatrixMap = Eigen::Map<const RowMatrix<T>>;

enum class Mode { kTrain, kInfer };

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

// Activations a layer keeps from one forward call for the matching backward
// or jacobian-vector product. Owned by the caller, so a frozen layer can be
// shared between concurrent inference calls.
template <typename T>
struct Saved {
  Mode mode = Mode::kInfer;
  std::vector<int> input_shape;
  std::vector<Tensor<T>> tensors;
};

namespace ops {

struct ConvGeometry {
  int kernel = 1;
  int stride = 1;
  int padding = 0;
};

int conv_output_size(int input, const ConvGeometry& g);
int conv_transpose_output_size(int input, const ConvGeometry& g, int output_padding);

// Unfolds a (channels, height, width) image into a (channels*k*k, out_h*out_w)
// column block whose rows are `row_stride` elements apart.
template <typename T>
void im2col(const T* image, int channels, int height, int width, const ConvGeometry& g,
            int out_h, int out_w, T* cols, std::size_t row_stride);

// Adjoint of im2col; accumulates into `image`.
template <typename T>
void col2im(const T* cols, std::size_t row_stride, int channels, int height, int width,
            const ConvGeometry& g, int out_h, int out_w, T* image);

// weight: (out, in, k, k); bias may be null. Zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                 const ConvGeometry& g);

// Returns d(input); accumulates into grad_weight / grad_bias when non-null.
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out,
                          const ConvGeometry& g, Tensor<T>* grad_weight, Tensor<T>* grad_bias);

// weight: (in, out, k, k).
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                           const ConvGeometry& g, int output_padding);

template <typename T>
Tensor<T> conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& weight,
                                    const Tensor<T>& grad_out, const ConvGeometry& g,
                                    Tensor<T>* grad_weight, Tensor<T>* grad_bias);

// x: (N, in) ; weight: (out, in).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias);

template <typename T>
Tensor<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out,
                          Tensor<T>* grad_weight, Tensor<T>* grad_bias);

}  // namespace ops

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  // Per-sample output shape for a per-sample input shape.
  virtual std::vector<int> output_shape(const std::vector<int>& input_shape) const = 0;

  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const = 0;
  // Accumulates parameter gradients and returns the input gradient.
  virtual Tensor<T> backward(const Tensor<T>& grad_out, const Saved<T>& saved) = 0;
  // Directional derivative around the saved inference-mode forward. The
  // tangent batch may be larger than the saved primal batch when the primal
  // batch is 1; the primal is then broadcast.
  virtual Tensor<T> jvp(const Tensor<T>& tangent, const Saved<T>& saved) const = 0;

  // Folds batch statistics from a training-mode forward into running state.
  virtual void commit_statistics(const Saved<T>& /*saved*/) {}

  virtual void initialize(std::mt19937_64& /*rng*/) {}

  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  // Persistent non-trainable state (batch-norm running statistics).
  virtual std::vector<Parameter<T>*> buffers() { return {}; }

  std::vector<const Parameter<T>*> parameters() const;
  std::vector<const Parameter<T>*> buffers() const;
};

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, bool bias = true);

  std::string kind() const override { return "conv"; }
  std::vector<int> output_shape(const std::vector<int>& input_shape) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const override;
  Tensor<T> backward(const Tensor<T>& grad_out, const Saved<T>& saved) override;
  Tensor<T> jvp(const Tensor<T>& tangent, const Saved<T>& saved) const override;
  void initialize(std::mt19937_64& rng) override;
  std::vector<Parameter<T>*> parameters() override;

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  int in_channels_;
  int out_channels_;
  ops::ConvGeometry geometry_;
  bool has_bias_;
  Parameter<T> weight_;
  Parameter<T> bias_;
};

template <typename T>
class ConvTranspose2d final : public Layer<T> {
 public:
  ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride, int padding,
                  int output_padding, bool bias = true);

  std::string kind() const override { return "conv_transpose"; }
  std::vector<int> output_shape(const std::vector<int>& input_shape) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const override;
  Tensor<T> backward(const Tensor<T>& grad_out, const Saved<T>& saved) override;
  Tensor<T> jvp(const Tensor<T>& tangent, const Saved<T>& saved) const override;
  void initialize(std::mt19937_64& rng) override;
  std::vector<Parameter<T>*> parameters() override;

 private:
  int in_channels_;
  int out_channels_;
  ops::ConvGeometry geometry_;
  int output_padding_;
  bool has_bias_;
  Parameter<T> weight_;
  Parameter<T> bias_;
};

// Fully connected layer; inputs of any rank are flattened per sample.
template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(int in_features, int out_features, bool bias = true);

  std::string kind() const override { return "linear"; }
  std::vector<int> output_shape(const std::vector<int>& input_shape) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const override;
  Tensor<T> backward(const Tensor<T>& grad_out, const Saved<T>& saved) override;
  Tensor<T> jvp(const Tensor<T>& tangent, const Saved<T>& saved) const override;
  void initialize(std::mt19937_64& rng) override;
  std::vector<Parameter<T>*> parameters() override;

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  int in_features_;
  int out_features_;
  bool has_bias_;
  Parameter<T> weight_;
  Parameter<T> bias_;
};

// Batch normalization over the channel axis of (N, C) or (N, C, H, W).
template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  explicit BatchNorm(int channels, double momentum = 0.9, double eps = 1e-5);

  std::string kind() const override { return "batch_norm"; }
  std::vector<int> output_shape(const std::vector<int>& input_shape) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const override;
  Tensor<T> backward(const Tensor<T>& grad_out, const Saved<T>& saved) override;
  Tensor<T> jvp(const Tensor<T>& tangent, const Saved<T>& saved) const override;
  void commit_statistics(const Saved<T>& saved) override;
  std::vector<Parameter<T>*> parameters() override;
  std::vector<Parameter<T>*> buffers() override;

 private:
  int channels_;
  double momentum_;  // weight kept on the running estimate per update
  double eps_;
  Parameter<T> scale_;
  Parameter<T> shift_;
  Parameter<T> running_mean_;
  Parameter<T> running_var_;
};

enum class ActivationKind { kNone, kLeakyRelu, kRelu, kTanh, kSigmoid };

std::string to_string(ActivationKind kind);
ActivationKind activation_from_string(const std::string& name);

template <typename T>
class Activation final : public Layer<T> {
 public:
  explicit Activation(ActivationKind kind, double negative_slope = 0.2);

  std::string kind() const override { return to_string(kind_); }
  std::vector<int> output_shape(const std::vector<int>& input_shape) const override {
    return input_shape;
  }
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const override;
  Tensor<T> backward(const Tensor<T>& grad_out, const Saved<T>& saved) override;
  Tensor<T> jvp(const Tensor<T>& tangent, const Saved<T>& saved) const override;

 private:
  // Derivative at each saved primal element.
  Tensor<T> derivative(const Saved<T>& saved) const;

  ActivationKind kind_;
  T slope_;
};

// (N, C, H, W) -> (N, C).
template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  std::string kind() const override { return "global_avg_pool"; }
  std::vector<int> output_shape(const std::vector<int>& input_shape) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const override;
  Tensor<T> backward(const Tensor<T>& grad_out, const Saved<T>& saved) override;
  Tensor<T> jvp(const Tensor<T>& tangent, const Saved<T>& saved) const override;
};

// Reinterprets each sample as the given per-sample shape.
template <typename T>
class Reshape final : public Layer<T> {
 public:
  explicit Reshape(std::vector<int> target) : target_(std::move(target)) {}

  std::string kind() const override { return "reshape"; }
  std::vector<int> output_shape(const std::vector<int>& input_shape) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const override;
  Tensor<T> backward(const Tensor<T>& grad_out, const Saved<T>& saved) override;
  Tensor<T> jvp(const Tensor<T>& tangent, const Saved<T>& saved) const override;

 private:
  std::vector<int> target_;
};

// Keeps the leading (height, width) corner of each feature map.
template <typename T>
class Crop final : public Layer<T> {
 public:
  Crop(int height, int width) : height_(height), width_(width) {}

  std::string kind() const override { return "crop"; }
  std::vector<int> output_shape(const std::vector<int>& input_shape) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const override;
  Tensor<T> backward(const Tensor<T>& grad_out, const Saved<T>& saved) override;
  Tensor<T> jvp(const Tensor<T>& tangent, const Saved<T>& saved) const override;

 private:
  int height_;
  int width_;
};

// Fan-in scaled uniform initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
void fan_in_uniform(Tensor<T>& t, int fan_in, std::mt19937_64& rng);

}  // namespace raoc
