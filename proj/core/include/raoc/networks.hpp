#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "raoc/attention.hpp"
#include "raoc/layers.hpp"
#include "raoc/tensor.hpp"

namespace raoc {

enum class LayerKind {
  kConv,
  kConvTranspose,
  kRelativeAttention,
  kLinear,
  kProjectToMap,  // linear map to channels*height*width, reshaped to a feature map
  kGlobalAvgPool,
  kCrop,
};

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

// One block of a stack: the core layer, then optional batch norm, then the
// activation. `channels` is the output channel (or feature) count.
struct LayerDescriptor {
  LayerKind kind = LayerKind::kConv;
  int channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  int output_padding = 0;
  int height = 0;  // kProjectToMap / kCrop target
  int width = 0;
  int neighborhood = 5;       // kRelativeAttention
  int projection_kernel = 1;  // kRelativeAttention
  bool batch_norm = false;
  ActivationKind activation = ActivationKind::kNone;

  bool operator==(const LayerDescriptor&) const = default;
};

struct NetworkSpec {
  int input_height = 12;
  int input_width = 50;
  int latent_dim = 64;
  std::vector<LayerDescriptor> encoder;
  std::vector<LayerDescriptor> decoder;
  std::vector<LayerDescriptor> latent_disc;
  std::vector<LayerDescriptor> sample_disc;

  // Throws ConfigError when a stack breaks its layer-count contract or does
  // not compose to the expected shapes.
  void validate() const;

  bool operator==(const NetworkSpec&) const = default;
};

struct ArchitectureOptions {
  int window_length = 50;
  int latent_dim = 64;
  int base_channels = 32;
  int neighborhood = 5;
  int projection_kernel = 1;

  bool operator==(const ArchitectureOptions&) const = default;
};

NetworkSpec default_network_spec(const ArchitectureOptions& options = {});

int count_layers(std::span<const LayerDescriptor> stack, LayerKind kind);

// Per-sample output shape of a stack.
std::vector<int> stack_output_shape(std::span<const LayerDescriptor> stack,
                                    std::vector<int> input_shape);

template <typename T>
using Tape = std::vector<Saved<T>>;

// Sequential composition of layers built from a descriptor stack.
template <typename T>
class Network {
 public:
  Network() = default;
  Network(std::string name, std::vector<LayerDescriptor> stack, std::vector<int> input_shape);

  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const std::string& name() const { return name_; }
  const std::vector<LayerDescriptor>& stack() const { return stack_; }
  const std::vector<int>& input_shape() const { return input_shape_; }
  const std::vector<int>& output_shape() const { return output_shape_; }
  std::size_t layer_count() const { return layers_.size(); }
  const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }
  Layer<T>& layer(std::size_t i) { return *layers_[i]; }

  // x: (N, input_shape...). A non-null tape receives one entry per layer.
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Tape<T>* tape = nullptr) const;
  Tensor<T> backward(const Tensor<T>& grad_out, const Tape<T>& tape);
  Tensor<T> jvp(const Tensor<T>& tangent, const Tape<T>& tape) const;
  void commit_statistics(const Tape<T>& tape);

  void initialize(std::mt19937_64& rng);
  void zero_grad();

  // Names are qualified, e.g. "encoder.3.weight".
  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  std::vector<Parameter<T>*> buffers();
  std::vector<const Parameter<T>*> buffers() const;
  std::int64_t parameter_count() const;

  // Same architecture in another precision with all values converted.
  template <typename U>
  Network<U> cast() const;

 private:
  std::string name_;
  std::vector<LayerDescriptor> stack_;
  std::vector<int> input_shape_;
  std::vector<int> output_shape_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

struct ParameterCounts {
  std::int64_t encoder = 0;
  std::int64_t decoder = 0;
  std::int64_t latent_disc = 0;
  std::int64_t sample_disc = 0;
  std::int64_t total() const { return encoder + decoder + latent_disc + sample_disc; }
};

std::int64_t count_parameters(std::span<const LayerDescriptor> stack,
                              std::vector<int> input_shape);

// The four networks trained together.
class Model {
 public:
  Model() = default;
  Model(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  int latent_dim() const { return spec_.latent_dim; }

  Network<float>& encoder() { return encoder_; }
  Network<float>& decoder() { return decoder_; }
  Network<float>& latent_disc() { return latent_disc_; }
  Network<float>& sample_disc() { return sample_disc_; }
  const Network<float>& encoder() const { return encoder_; }
  const Network<float>& decoder() const { return decoder_; }
  const Network<float>& latent_disc() const { return latent_disc_; }
  const Network<float>& sample_disc() const { return sample_disc_; }

  // Inference-mode maps. Windows are (N, 1, H, W), latents (N, latent_dim),
  // probabilities (N, 1).
  Tensor<float> encode(const Tensor<float>& windows) const;
  Tensor<float> decode(const Tensor<float>& latents) const;
  Tensor<float> latent_discriminate(const Tensor<float>& latents) const;
  Tensor<float> sample_discriminate(const Tensor<float>& windows) const;

  ParameterCounts count_parameters() const;

  // Every parameter then every buffer, in a fixed order.
  std::vector<Parameter<float>*> state();
  std::vector<const Parameter<float>*> state() const;

 private:
  NetworkSpec spec_;
  std::uint64_t seed_ = 0;
  Network<float> encoder_;
  Network<float> decoder_;
  Network<float> latent_disc_;
  Network<float> sample_disc_;
};

}  // namespace raoc
