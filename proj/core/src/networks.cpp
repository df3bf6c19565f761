#include "raoc/networks.hpp"

#include <algorithm>
#include <array>
#include <utility>

#include "raoc/errors.hpp"

namespace raoc {

namespace {

constexpr std::array<std::pair<LayerKind, const char*>, 7> kKindNames{{
    {LayerKind::kConv, "conv"},
    {LayerKind::kConvTranspose, "conv_transpose"},
    {LayerKind::kRelativeAttention, "relative_attention"},
    {LayerKind::kLinear, "linear"},
    {LayerKind::kProjectToMap, "project_to_map"},
    {LayerKind::kGlobalAvgPool, "global_avg_pool"},
    {LayerKind::kCrop, "crop"},
}};

int ceil_div(int a, int b) { return (a + b - 1) / b; }

std::vector<int> block_output_shape(const LayerDescriptor& d, const std::vector<int>& in) {
  auto require_map = [&](const char* what) {
    if (in.size() != 3) {
      throw ConfigError(std::string(what) + " expects a (C, H, W) input, got " +
                        shape_to_string(in));
    }
  };
  switch (d.kind) {
    case LayerKind::kConv: {
      require_map("conv");
      const ops::ConvGeometry g{d.kernel, d.stride, d.padding};
      const int h = ops::conv_output_size(in[1], g);
      const int w = ops::conv_output_size(in[2], g);
      if (h < 1 || w < 1) throw ConfigError("conv reduces " + shape_to_string(in) + " to nothing");
      return {d.channels, h, w};
    }
    case LayerKind::kConvTranspose: {
      require_map("conv_transpose");
      const ops::ConvGeometry g{d.kernel, d.stride, d.padding};
      return {d.channels, ops::conv_transpose_output_size(in[1], g, d.output_padding),
              ops::conv_transpose_output_size(in[2], g, d.output_padding)};
    }
    case LayerKind::kRelativeAttention:
      require_map("relative_attention");
      return {d.channels, in[1], in[2]};
    case LayerKind::kLinear:
      return {d.channels};
    case LayerKind::kProjectToMap:
      return {d.channels, d.height, d.width};
    case LayerKind::kGlobalAvgPool:
      require_map("global_avg_pool");
      return {in[0]};
    case LayerKind::kCrop:
      require_map("crop");
      if (d.height > in[1] || d.width > in[2]) {
        throw ConfigError("crop to " + std::to_string(d.height) + "x" + std::to_string(d.width) +
                          " exceeds input " + shape_to_string(in));
      }
      return {in[0], d.height, d.width};
  }
  throw ConfigError("unknown layer kind");
}

template <typename T>
std::unique_ptr<Layer<T>> make_core_layer(const LayerDescriptor& d, const std::vector<int>& in) {
  switch (d.kind) {
    case LayerKind::kConv:
      return std::make_unique<Conv2d<T>>(in[0], d.channels, d.kernel, d.stride, d.padding);
    case LayerKind::kConvTranspose:
      return std::make_unique<ConvTranspose2d<T>>(in[0], d.channels, d.kernel, d.stride,
                                                  d.padding, d.output_padding);
    case LayerKind::kRelativeAttention: {
      AttentionConfig config;
      config.in_channels = in[0];
      config.out_channels = d.channels;
      config.neighborhood = d.neighborhood;
      config.projection_kernel = d.projection_kernel;
      return std::make_unique<RelativeAttention<T>>(config);
    }
    case LayerKind::kLinear:
      return std::make_unique<Linear<T>>(static_cast<int>(shape_volume(in)), d.channels);
    case LayerKind::kProjectToMap:
      return std::make_unique<Linear<T>>(static_cast<int>(shape_volume(in)),
                                         d.channels * d.height * d.width);
    case LayerKind::kGlobalAvgPool:
      return std::make_unique<GlobalAvgPool<T>>();
    case LayerKind::kCrop:
      return std::make_unique<Crop<T>>(d.height, d.width);
  }
  throw ConfigError("unknown layer kind");
}

void validate_descriptor(const LayerDescriptor& d) {
  const bool needs_channels = d.kind != LayerKind::kGlobalAvgPool && d.kind != LayerKind::kCrop;
  if (needs_channels && d.channels < 1) {
    throw ConfigError(to_string(d.kind) + " layer needs channels >= 1");
  }
  if ((d.kind == LayerKind::kConv || d.kind == LayerKind::kConvTranspose) &&
      (d.kernel < 1 || d.stride < 1 || d.padding < 0 || d.output_padding < 0)) {
    throw ConfigError(to_string(d.kind) + " layer has invalid kernel/stride/padding");
  }
  if ((d.kind == LayerKind::kProjectToMap || d.kind == LayerKind::kCrop) &&
      (d.height < 1 || d.width < 1)) {
    throw ConfigError(to_string(d.kind) + " layer needs a positive height and width");
  }
}

void require_count(const std::vector<LayerDescriptor>& stack, LayerKind kind, int expected,
                   const char* stack_name) {
  const int found = count_layers(stack, kind);
  if (found != expected) {
    throw ConfigError(std::string(stack_name) + " needs exactly " + std::to_string(expected) +
                      " " + to_string(kind) + " layers, found " + std::to_string(found));
  }
}

void require_shape(const std::vector<int>& got, const std::vector<int>& expected,
                   const char* stack_name) {
  if (got != expected) {
    throw ConfigError(std::string(stack_name) + " produces " + shape_to_string(got) +
                      ", expected " + shape_to_string(expected));
  }
}

void require_final_activation(const std::vector<LayerDescriptor>& stack, ActivationKind kind,
                              const char* stack_name) {
  if (stack.empty() || stack.back().activation != kind) {
    throw ConfigError(std::string(stack_name) + " must end in " + to_string(kind));
  }
}

}  // namespace

std::string to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (const auto& [k, n] : kKindNames) {
    if (name == n) return k;
  }
  throw ConfigError("unknown layer kind '" + name + "'");
}

int count_layers(std::span<const LayerDescriptor> stack, LayerKind kind) {
  return static_cast<int>(
      std::count_if(stack.begin(), stack.end(), [&](const auto& d) { return d.kind == kind; }));
}

std::vector<int> stack_output_shape(std::span<const LayerDescriptor> stack,
                                    std::vector<int> shape) {
  for (const auto& d : stack) {
    validate_descriptor(d);
    shape = block_output_shape(d, shape);
  }
  return shape;
}

void NetworkSpec::validate() const {
  if (input_height < 1 || input_width < 1 || latent_dim < 1) {
    throw ConfigError("network input and latent dimensions must be >= 1");
  }
  const std::vector<int> window{1, input_height, input_width};
  const std::vector<int> latent{latent_dim};

  require_count(encoder, LayerKind::kConv, 3, "encoder");
  require_count(encoder, LayerKind::kRelativeAttention, 3, "encoder");
  require_shape(stack_output_shape(encoder, window), latent, "encoder");
  require_final_activation(encoder, ActivationKind::kTanh, "encoder");

  require_count(decoder, LayerKind::kConvTranspose, 3, "decoder");
  require_count(decoder, LayerKind::kRelativeAttention, 2, "decoder");
  require_shape(stack_output_shape(decoder, latent), window, "decoder");
  require_final_activation(decoder, ActivationKind::kSigmoid, "decoder");

  require_count(latent_disc, LayerKind::kLinear, 6, "latent discriminator");
  require_shape(stack_output_shape(latent_disc, latent), {1}, "latent discriminator");
  require_final_activation(latent_disc, ActivationKind::kSigmoid, "latent discriminator");

  require_count(sample_disc, LayerKind::kConv, 4, "sample discriminator");
  require_count(sample_disc, LayerKind::kRelativeAttention, 3, "sample discriminator");
  require_shape(stack_output_shape(sample_disc, window), {1}, "sample discriminator");
  require_final_activation(sample_disc, ActivationKind::kSigmoid, "sample discriminator");
}

NetworkSpec default_network_spec(const ArchitectureOptions& o) {
  if (o.window_length < 8) {
    throw ConfigError("window length must be >= 8 samples, got " +
                      std::to_string(o.window_length));
  }
  if (o.base_channels < 1) throw ConfigError("base_channels must be >= 1");

  const auto lrelu = ActivationKind::kLeakyRelu;
  auto conv = [&](int channels, int stride) {
    LayerDescriptor d;
    d.kind = LayerKind::kConv;
    d.channels = channels;
    d.stride = stride;
    d.batch_norm = true;
    d.activation = lrelu;
    return d;
  };
  auto tconv = [&](int channels) {
    LayerDescriptor d;
    d.kind = LayerKind::kConvTranspose;
    d.channels = channels;
    d.stride = 2;
    d.output_padding = 1;
    d.batch_norm = true;
    d.activation = lrelu;
    return d;
  };
  auto attention = [&](int channels) {
    LayerDescriptor d;
    d.kind = LayerKind::kRelativeAttention;
    d.channels = channels;
    d.neighborhood = o.neighborhood;
    d.projection_kernel = o.projection_kernel;
    d.batch_norm = true;
    d.activation = lrelu;
    return d;
  };
  auto linear = [](int features, bool bn, ActivationKind act) {
    LayerDescriptor d;
    d.kind = LayerKind::kLinear;
    d.channels = features;
    d.batch_norm = bn;
    d.activation = act;
    return d;
  };

  const int w = o.base_channels;
  NetworkSpec spec;
  spec.input_width = o.window_length;
  spec.latent_dim = o.latent_dim;

  spec.encoder = {conv(w, 1),     attention(w),     conv(2 * w, 2),
                  attention(2 * w), conv(2 * w, 2), attention(2 * w),
                  linear(o.latent_dim, false, ActivationKind::kTanh)};

  LayerDescriptor project;
  project.kind = LayerKind::kProjectToMap;
  project.channels = 2 * w;
  project.height = ceil_div(spec.input_height, 4);
  project.width = ceil_div(spec.input_width, 4);
  project.batch_norm = true;
  project.activation = lrelu;
  LayerDescriptor crop;
  crop.kind = LayerKind::kCrop;
  crop.height = spec.input_height;
  crop.width = spec.input_width;
  LayerDescriptor to_window;
  to_window.kind = LayerKind::kConvTranspose;
  to_window.channels = 1;
  to_window.activation = ActivationKind::kSigmoid;
  spec.decoder = {project,   tconv(2 * w), attention(2 * w), tconv(w),
                  attention(w), crop,      to_window};

  const auto relu = ActivationKind::kRelu;
  spec.latent_disc = {linear(128, true, relu), linear(128, true, relu),
                      linear(64, true, relu),  linear(64, true, relu),
                      linear(32, true, relu),  linear(1, false, ActivationKind::kSigmoid)};

  LayerDescriptor head;
  head.kind = LayerKind::kConv;
  head.channels = 1;
  LayerDescriptor pool;
  pool.kind = LayerKind::kGlobalAvgPool;
  pool.activation = ActivationKind::kSigmoid;
  spec.sample_disc = {conv(w, 1),     attention(w),     conv(2 * w, 2), attention(2 * w),
                      conv(4 * w, 2), attention(4 * w), head,           pool};

  spec.validate();
  return spec;
}

// --- Network ----------------------------------------------------------------

template <typename T>
Network<T>::Network(std::string name, std::vector<LayerDescriptor> stack,
                    std::vector<int> input_shape)
    : name_(std::move(name)), stack_(std::move(stack)), input_shape_(std::move(input_shape)) {
  std::vector<int> shape = input_shape_;
  for (std::size_t i = 0; i < stack_.size(); ++i) {
    const LayerDescriptor& d = stack_[i];
    validate_descriptor(d);
    const std::string prefix = name_ + "." + std::to_string(i) + ".";
    std::vector<std::unique_ptr<Layer<T>>> block;
    block.push_back(make_core_layer<T>(d, shape));
    if (d.kind == LayerKind::kProjectToMap) {
      block.push_back(std::make_unique<Reshape<T>>(std::vector<int>{d.channels, d.height, d.width}));
    }
    const std::vector<int> out = block_output_shape(d, shape);
    if (d.batch_norm) block.push_back(std::make_unique<BatchNorm<T>>(out[0]));
    if (d.activation != ActivationKind::kNone) {
      block.push_back(std::make_unique<Activation<T>>(d.activation));
    }
    for (auto& layer : block) {
      const std::string qualifier = layer->kind() == "batch_norm" ? prefix + "bn." : prefix;
      for (Parameter<T>* p : layer->parameters()) p->name = qualifier + p->name;
      for (Parameter<T>* p : layer->buffers()) p->name = qualifier + p->name;
      layers_.push_back(std::move(layer));
    }
    shape = out;
  }
  output_shape_ = shape;
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& x, Mode mode, Tape<T>* tape) const {
  if (x.rank() < 1 ||
      std::vector<int>(x.shape().begin() + 1, x.shape().end()) != input_shape_) {
    throw ConfigError(name_ + " expects (N, " + shape_to_string(input_shape_).substr(1) +
                      " input, got " + x.shape_string());
  }
  if (tape) tape->assign(layers_.size(), Saved<T>{});
  Tensor<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i]->forward(h, mode, tape ? &(*tape)[i] : nullptr);
  }
  return h;
}

template <typename T>
Tensor<T> Network<T>::backward(const Tensor<T>& grad_out, const Tape<T>& tape) {
  if (tape.size() != layers_.size()) {
    throw ConfigError(name_ + ": backward needs the tape of a recorded forward");
  }
  Tensor<T> g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g, tape[i]);
  return g;
}

template <typename T>
Tensor<T> Network<T>::jvp(const Tensor<T>& tangent, const Tape<T>& tape) const {
  if (tape.size() != layers_.size()) {
    throw ConfigError(name_ + ": jvp needs the tape of a recorded forward");
  }
  Tensor<T> t = tangent;
  for (std::size_t i = 0; i < layers_.size(); ++i) t = layers_[i]->jvp(t, tape[i]);
  return t;
}

template <typename T>
void Network<T>::commit_statistics(const Tape<T>& tape) {
  if (tape.size() != layers_.size()) {
    throw ConfigError(name_ + ": commit_statistics needs the tape of a recorded forward");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->commit_statistics(tape[i]);
}

template <typename T>
void Network<T>::initialize(std::mt19937_64& rng) {
  for (auto& layer : layers_) layer->initialize(rng);
}

template <typename T>
void Network<T>::zero_grad() {
  for (Parameter<T>* p : parameters()) p->grad.set_zero();
}

template <typename T>
std::vector<Parameter<T>*> Network<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& layer : layers_) {
    for (Parameter<T>* p : layer->parameters()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> Network<T>::parameters() const {
  std::vector<const Parameter<T>*> out;
  for (const auto& layer : layers_) {
    for (const Parameter<T>* p : std::as_const(*layer).parameters()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::vector<Parameter<T>*> Network<T>::buffers() {
  std::vector<Parameter<T>*> out;
  for (auto& layer : layers_) {
    for (Parameter<T>* p : layer->buffers()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> Network<T>::buffers() const {
  std::vector<const Parameter<T>*> out;
  for (const auto& layer : layers_) {
    for (const Parameter<T>* p : std::as_const(*layer).buffers()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::int64_t Network<T>::parameter_count() const {
  std::int64_t n = 0;
  for (const Parameter<T>* p : parameters()) n += static_cast<std::int64_t>(p->value.size());
  return n;
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
  Network<U> out(name_, stack_, input_shape_);
  const auto src_params = parameters();
  const auto dst_params = out.parameters();
  for (std::size_t i = 0; i < src_params.size(); ++i) {
    dst_params[i]->value = src_params[i]->value.template cast<U>();
  }
  const auto src_buffers = buffers();
  const auto dst_buffers = out.buffers();
  for (std::size_t i = 0; i < src_buffers.size(); ++i) {
    dst_buffers[i]->value = src_buffers[i]->value.template cast<U>();
  }
  return out;
}

template class Network<float>;
template class Network<double>;
template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> Network<float>::cast<float>() const;
template Network<double> Network<double>::cast<double>() const;

std::int64_t count_parameters(std::span<const LayerDescriptor> stack,
                              std::vector<int> input_shape) {
  const Network<float> net("count", {stack.begin(), stack.end()}, std::move(input_shape));
  return net.parameter_count();
}

// --- Model ------------------------------------------------------------------

Model::Model(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
  spec_.validate();
  const std::vector<int> window{1, spec_.input_height, spec_.input_width};
  const std::vector<int> latent{spec_.latent_dim};
  encoder_ = Network<float>("encoder", spec_.encoder, window);
  decoder_ = Network<float>("decoder", spec_.decoder, latent);
  latent_disc_ = Network<float>("latent_disc", spec_.latent_disc, latent);
  sample_disc_ = Network<float>("sample_disc", spec_.sample_disc, window);
  std::mt19937_64 rng(seed_);
  encoder_.initialize(rng);
  decoder_.initialize(rng);
  latent_disc_.initialize(rng);
  sample_disc_.initialize(rng);
}

Tensor<float> Model::encode(const Tensor<float>& windows) const {
  if (!windows.all_finite()) throw NumericError("encode: non-finite window values");
  return encoder_.forward(windows, Mode::kInfer);
}

Tensor<float> Model::decode(const Tensor<float>& latents) const {
  if (latents.rank() != 2 || latents.dim(1) != spec_.latent_dim) {
    throw ConfigError("decode expects (N, " + std::to_string(spec_.latent_dim) +
                      ") latents, got " + latents.shape_string());
  }
  return decoder_.forward(latents, Mode::kInfer);
}

Tensor<float> Model::latent_discriminate(const Tensor<float>& latents) const {
  if (latents.rank() != 2 || latents.dim(1) != spec_.latent_dim) {
    throw ConfigError("latent_discriminate expects (N, " + std::to_string(spec_.latent_dim) +
                      ") latents, got " + latents.shape_string());
  }
  return latent_disc_.forward(latents, Mode::kInfer);
}

Tensor<float> Model::sample_discriminate(const Tensor<float>& windows) const {
  return sample_disc_.forward(windows, Mode::kInfer);
}

ParameterCounts Model::count_parameters() const {
  return {encoder_.parameter_count(), decoder_.parameter_count(),
          latent_disc_.parameter_count(), sample_disc_.parameter_count()};
}

std::vector<Parameter<float>*> Model::state() {
  std::vector<Parameter<float>*> out;
  for (Network<float>* net : {&encoder_, &decoder_, &latent_disc_, &sample_disc_}) {
    for (Parameter<float>* p : net->parameters()) out.push_back(p);
  }
  for (Network<float>* net : {&encoder_, &decoder_, &latent_disc_, &sample_disc_}) {
    for (Parameter<float>* p : net->buffers()) out.push_back(p);
  }
  return out;
}

std::vector<const Parameter<float>*> Model::state() const {
  std::vector<const Parameter<float>*> out;
  for (Parameter<float>* p : const_cast<Model*>(this)->state()) out.push_back(p);
  return out;
}

}  // namespace raoc
