#include "raoc/layers.hpp"

#include <algorithm>
#include <cmath>

#include "raoc/errors.hpp"

namespace raoc {
namespace ops {

int conv_output_size(int input, const ConvGeometry& g) {
  return (input + 2 * g.padding - g.kernel) / g.stride + 1;
}

int conv_transpose_output_size(int input, const ConvGeometry& g, int output_padding) {
  return (input - 1) * g.stride - 2 * g.padding + g.kernel + output_padding;
}

template <typename T>
void im2col(const T* image, int channels, int height, int width, const ConvGeometry& g,
            int out_h, int out_w, T* cols, std::size_t row_stride) {
  const int k = g.kernel;
  for (int c = 0; c < channels; ++c) {
    const T* plane = image + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = cols + static_cast<std::size_t>((c * k + ki) * k + kj) * row_stride;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * g.stride - g.padding + ki;
          T* dst = row + static_cast<std::size_t>(oh) * out_w;
          if (ih < 0 || ih >= height) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * width;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * g.stride - g.padding + kj;
            dst[ow] = (iw >= 0 && iw < width) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, std::size_t row_stride, int channels, int height, int width,
            const ConvGeometry& g, int out_h, int out_w, T* image) {
  const int k = g.kernel;
  for (int c = 0; c < channels; ++c) {
    T* plane = image + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = cols + static_cast<std::size_t>((c * k + ki) * k + kj) * row_stride;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * g.stride - g.padding + ki;
          if (ih < 0 || ih >= height) continue;
          const T* src = row + static_cast<std::size_t>(oh) * out_w;
          T* dst = plane + static_cast<std::size_t>(ih) * width;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * g.stride - g.padding + kj;
            if (iw >= 0 && iw < width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

namespace {

// (N, C, ...) -> (C, N * P) with P the per-channel plane size.
template <typename T>
RowMatrix<T> to_channel_major(const Tensor<T>& x) {
  const int n = x.dim(0);
  const int c = x.dim(1);
  const std::size_t plane = x.slice_size() / static_cast<std::size_t>(c);
  RowMatrix<T> out(c, static_cast<Eigen::Index>(n * plane));
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      const T* src = x.slice(s) + ch * plane;
      std::copy(src, src + plane, out.data() + ch * out.cols() + s * plane);
    }
  }
  return out;
}

template <typename T>
void from_channel_major(const RowMatrix<T>& m, Tensor<T>& out) {
  const int n = out.dim(0);
  const int c = out.dim(1);
  const std::size_t plane = out.slice_size() / static_cast<std::size_t>(c);
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      const T* src = m.data() + ch * m.cols() + s * plane;
      std::copy(src, src + plane, out.slice(s) + ch * plane);
    }
  }
}

void require_rank(const std::vector<int>& shape, int rank, const char* what) {
  if (static_cast<int>(shape.size()) != rank) {
    throw ConfigError(std::string(what) + " expects a rank-" + std::to_string(rank) +
                      " input, got " + shape_to_string(shape));
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == 1 && g.stride == 1 && g.padding == 0;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                 const ConvGeometry& g) {
  require_rank(x.shape(), 4, "conv2d");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int out_c = weight.dim(0);
  if (weight.dim(1) != c) {
    throw ConfigError("conv2d: input has " + std::to_string(c) + " channels, weight expects " +
                      std::to_string(weight.dim(1)));
  }
  const int oh = conv_output_size(h, g), ow = conv_output_size(w, g);
  if (oh <= 0 || ow <= 0) throw ConfigError("conv2d: input " + x.shape_string() + " too small");
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  const int depth = c * g.kernel * g.kernel;

  RowMatrix<T> cols;
  if (is_pointwise(g)) {
    cols = to_channel_major(x);
  } else {
    cols.resize(depth, static_cast<Eigen::Index>(n * plane));
    for (int s = 0; s < n; ++s) {
      im2col(x.slice(s), c, h, w, g, oh, ow, cols.data() + s * plane,
             static_cast<std::size_t>(cols.cols()));
    }
  }
  ConstRowMatrixMap<T> wm(weight.data(), out_c, depth);
  RowMatrix<T> y = wm * cols;
  if (bias) {
    y.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias->data(), out_c);
  }
  Tensor<T> out({n, out_c, oh, ow});
  from_channel_major(y, out);
  return out;
}

template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out,
                          const ConvGeometry& g, Tensor<T>* grad_weight, Tensor<T>* grad_bias) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int out_c = weight.dim(0);
  const int oh = grad_out.dim(2), ow = grad_out.dim(3);
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  const int depth = c * g.kernel * g.kernel;

  RowMatrix<T> dy = to_channel_major(grad_out);
  ConstRowMatrixMap<T> wm(weight.data(), out_c, depth);

  if (grad_weight) {
    RowMatrix<T> cols;
    if (is_pointwise(g)) {
      cols = to_channel_major(x);
    } else {
      cols.resize(depth, static_cast<Eigen::Index>(n * plane));
      for (int s = 0; s < n; ++s) {
        im2col(x.slice(s), c, h, w, g, oh, ow, cols.data() + s * plane,
               static_cast<std::size_t>(cols.cols()));
      }
    }
    RowMatrixMap<T>(grad_weight->data(), out_c, depth).noalias() += dy * cols.transpose();
  }
  if (grad_bias) {
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(grad_bias->data(), out_c) +=
        dy.rowwise().sum();
  }

  RowMatrix<T> dcols = wm.transpose() * dy;
  Tensor<T> dx(x.shape());
  if (is_pointwise(g)) {
    from_channel_major(dcols, dx);
  } else {
    for (int s = 0; s < n; ++s) {
      col2im(dcols.data() + s * plane, static_cast<std::size_t>(dcols.cols()), c, h, w, g, oh,
             ow, dx.slice(s));
    }
  }
  return dx;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                           const ConvGeometry& g, int output_padding) {
  require_rank(x.shape(), 4, "conv_transpose2d");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (weight.dim(0) != c) {
    throw ConfigError("conv_transpose2d: input has " + std::to_string(c) +
                      " channels, weight expects " + std::to_string(weight.dim(0)));
  }
  const int out_c = weight.dim(1);
  const int oh = conv_transpose_output_size(h, g, output_padding);
  const int ow = conv_transpose_output_size(w, g, output_padding);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const int depth = out_c * g.kernel * g.kernel;

  RowMatrix<T> xm = to_channel_major(x);
  ConstRowMatrixMap<T> wm(weight.data(), c, depth);
  RowMatrix<T> cols = wm.transpose() * xm;

  Tensor<T> out({n, out_c, oh, ow});
  for (int s = 0; s < n; ++s) {
    col2im(cols.data() + s * plane, static_cast<std::size_t>(cols.cols()), out_c, oh, ow, g, h, w,
           out.slice(s));
  }
  if (bias) {
    const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
    for (int s = 0; s < n; ++s) {
      for (int ch = 0; ch < out_c; ++ch) {
        T* dst = out.slice(s) + ch * out_plane;
        const T b = (*bias)[ch];
        for (std::size_t i = 0; i < out_plane; ++i) dst[i] += b;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& weight,
                                    const Tensor<T>& grad_out, const ConvGeometry& g,
                                    Tensor<T>* grad_weight, Tensor<T>* grad_bias) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int out_c = weight.dim(1);
  const int oh = grad_out.dim(2), ow = grad_out.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const int depth = out_c * g.kernel * g.kernel;

  RowMatrix<T> dcols(depth, static_cast<Eigen::Index>(n * plane));
  for (int s = 0; s < n; ++s) {
    im2col(grad_out.slice(s), out_c, oh, ow, g, h, w, dcols.data() + s * plane,
           static_cast<std::size_t>(dcols.cols()));
  }
  ConstRowMatrixMap<T> wm(weight.data(), c, depth);
  if (grad_weight) {
    RowMatrix<T> xm = to_channel_major(x);
    RowMatrixMap<T>(grad_weight->data(), c, depth).noalias() += xm * dcols.transpose();
  }
  if (grad_bias) {
    const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
    for (int s = 0; s < n; ++s) {
      for (int ch = 0; ch < out_c; ++ch) {
        const T* src = grad_out.slice(s) + ch * out_plane;
        T acc = 0;
        for (std::size_t i = 0; i < out_plane; ++i) acc += src[i];
        (*grad_bias)[ch] += acc;
      }
    }
  }
  RowMatrix<T> dxm = wm * dcols;
  Tensor<T> dx(x.shape());
  from_channel_major(dxm, dx);
  return dx;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias) {
  const int n = x.dim(0);
  const int in = static_cast<int>(x.slice_size());
  const int out = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ConfigError("linear: input has " + std::to_string(in) + " features, weight expects " +
                      std::to_string(weight.dim(1)));
  }
  Tensor<T> y({n, out});
  RowMatrixMap<T> ym(y.data(), n, out);
  ym.noalias() = ConstRowMatrixMap<T>(x.data(), n, in) *
                 ConstRowMatrixMap<T>(weight.data(), out, in).transpose();
  if (bias) {
    ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias->data(), out);
  }
  return y;
}

template <typename T>
Tensor<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out,
                          Tensor<T>* grad_weight, Tensor<T>* grad_bias) {
  const int n = x.dim(0);
  const int in = static_cast<int>(x.slice_size());
  const int out = weight.dim(0);
  ConstRowMatrixMap<T> dy(grad_out.data(), n, out);
  if (grad_weight) {
    RowMatrixMap<T>(grad_weight->data(), out, in).noalias() +=
        dy.transpose() * ConstRowMatrixMap<T>(x.data(), n, in);
  }
  if (grad_bias) {
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(grad_bias->data(), out) += dy.colwise().sum();
  }
  Tensor<T> dx(x.shape());
  RowMatrixMap<T>(dx.data(), n, in).noalias() =
      dy * ConstRowMatrixMap<T>(weight.data(), out, in);
  return dx;
}

#define RAOC_INSTANTIATE_OPS(T)                                                                 \
  template void im2col<T>(const T*, int, int, int, const ConvGeometry&, int, int, T*,           \
                          std::size_t);                                                         \
  template void col2im<T>(const T*, std::size_t, int, int, int, const ConvGeometry&, int, int,  \
                          T*);                                                                  \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,            \
                               const ConvGeometry&);                                            \
  template Tensor<T> conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                        const ConvGeometry&, Tensor<T>*, Tensor<T>*);           \
  template Tensor<T> conv_transpose2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,  \
                                         const ConvGeometry&, int);                             \
  template Tensor<T> conv_transpose2d_backward<T>(const Tensor<T>&, const Tensor<T>&,           \
                                                  const Tensor<T>&, const ConvGeometry&,        \
                                                  Tensor<T>*, Tensor<T>*);                      \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);           \
  template Tensor<T> linear_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                        Tensor<T>*, Tensor<T>*);

RAOC_INSTANTIATE_OPS(float)
RAOC_INSTANTIATE_OPS(double)
#undef RAOC_INSTANTIATE_OPS

}  // namespace ops

template <typename T>
void fan_in_uniform(Tensor<T>& t, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

template <typename T>
std::vector<const Parameter<T>*> Layer<T>::parameters() const {
  auto params = const_cast<Layer<T>*>(this)->parameters();
  return {params.begin(), params.end()};
}

template <typename T>
std::vector<const Parameter<T>*> Layer<T>::buffers() const {
  auto bufs = const_cast<Layer<T>*>(this)->buffers();
  return {bufs.begin(), bufs.end()};
}

namespace {

template <typename T>
Parameter<T> make_parameter(std::string name, std::vector<int> shape, T fill = T(0)) {
  Parameter<T> p;
  p.name = std::move(name);
  p.value = Tensor<T>(shape, fill);
  p.grad = Tensor<T>(std::move(shape));
  return p;
}

template <typename T>
const Tensor<T>& saved_input(const Saved<T>& saved, const char* layer) {
  if (saved.tensors.empty()) {
    throw ConfigError(std::string(layer) + ": backward called without a saved forward");
  }
  return saved.tensors[0];
}

}  // namespace

// --- Conv2d -----------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding,
                  bool bias)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      geometry_{kernel, stride, padding},
      has_bias_(bias),
      weight_(make_parameter<T>("weight", {out_channels, in_channels, kernel, kernel})),
      bias_(make_parameter<T>("bias", {bias ? out_channels : 0})) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1 || padding < 0) {
    throw ConfigError("conv: invalid geometry");
  }
}

template <typename T>
std::vector<int> Conv2d<T>::output_shape(const std::vector<int>& s) const {
  if (s.size() != 3 || s[0] != in_channels_) {
    throw ConfigError("conv expects (" + std::to_string(in_channels_) + ", H, W), got " +
                      shape_to_string(s));
  }
  return {out_channels_, ops::conv_output_size(s[1], geometry_),
          ops::conv_output_size(s[2], geometry_)};
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const {
  if (saved) {
    saved->mode = mode;
    saved->tensors = {x};
  }
  return ops::conv2d<T>(x, weight_.value, has_bias_ ? &bias_.value : nullptr, geometry_);
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out, const Saved<T>& saved) {
  return ops::conv2d_backward(saved_input(saved, "conv"), weight_.value, grad_out, geometry_,
                              &weight_.grad, has_bias_ ? &bias_.grad : nullptr);
}

template <typename T>
Tensor<T> Conv2d<T>::jvp(const Tensor<T>& tangent, const Saved<T>&) const {
  return ops::conv2d<T>(tangent, weight_.value, nullptr, geometry_);
}

template <typename T>
void Conv2d<T>::initialize(std::mt19937_64& rng) {
  const int fan_in = in_channels_ * geometry_.kernel * geometry_.kernel;
  fan_in_uniform(weight_.value, fan_in, rng);
  if (has_bias_) fan_in_uniform(bias_.value, fan_in, rng);
}

template <typename T>
std::vector<Parameter<T>*> Conv2d<T>::parameters() {
  if (has_bias_) return {&weight_, &bias_};
  return {&weight_};
}

// --- ConvTranspose2d --------------------------------------------------------

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride,
                                    int padding, int output_padding, bool bias)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      geometry_{kernel, stride, padding},
      output_padding_(output_padding),
      has_bias_(bias),
      weight_(make_parameter<T>("weight", {in_channels, out_channels, kernel, kernel})),
      bias_(make_parameter<T>("bias", {bias ? out_channels : 0})) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1 || padding < 0 ||
      output_padding < 0 || output_padding >= stride) {
    throw ConfigError("conv_transpose: invalid geometry");
  }
}

template <typename T>
std::vector<int> ConvTranspose2d<T>::output_shape(const std::vector<int>& s) const {
  if (s.size() != 3 || s[0] != in_channels_) {
    throw ConfigError("conv_transpose expects (" + std::to_string(in_channels_) +
                      ", H, W), got " + shape_to_string(s));
  }
  return {out_channels_, ops::conv_transpose_output_size(s[1], geometry_, output_padding_),
          ops::conv_transpose_output_size(s[2], geometry_, output_padding_)};
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const {
  if (saved) {
    saved->mode = mode;
    saved->tensors = {x};
  }
  return ops::conv_transpose2d<T>(x, weight_.value, has_bias_ ? &bias_.value : nullptr, geometry_,
                               output_padding_);
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& grad_out, const Saved<T>& saved) {
  return ops::conv_transpose2d_backward(saved_input(saved, "conv_transpose"), weight_.value,
                                        grad_out, geometry_, &weight_.grad,
                                        has_bias_ ? &bias_.grad : nullptr);
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::jvp(const Tensor<T>& tangent, const Saved<T>&) const {
  return ops::conv_transpose2d<T>(tangent, weight_.value, nullptr, geometry_, output_padding_);
}

template <typename T>
void ConvTranspose2d<T>::initialize(std::mt19937_64& rng) {
  const int fan_in = in_channels_ * geometry_.kernel * geometry_.kernel;
  fan_in_uniform(weight_.value, fan_in, rng);
  if (has_bias_) fan_in_uniform(bias_.value, fan_in, rng);
}

template <typename T>
std::vector<Parameter<T>*> ConvTranspose2d<T>::parameters() {
  if (has_bias_) return {&weight_, &bias_};
  return {&weight_};
}

// --- Linear -----------------------------------------------------------------

template <typename T>
Linear<T>::Linear(int in_features, int out_features, bool bias)
    : in_features_(in_features),
      out_features_(out_features),
      has_bias_(bias),
      weight_(make_parameter<T>("weight", {out_features, in_features})),
      bias_(make_parameter<T>("bias", {bias ? out_features : 0})) {
  if (in_features < 1 || out_features < 1) throw ConfigError("linear: invalid feature counts");
}

template <typename T>
std::vector<int> Linear<T>::output_shape(const std::vector<int>& s) const {
  if (static_cast<int>(shape_volume(s)) != in_features_) {
    throw ConfigError("linear expects " + std::to_string(in_features_) + " features, got " +
                      shape_to_string(s));
  }
  return {out_features_};
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const {
  if (saved) {
    saved->mode = mode;
    saved->tensors = {x};
  }
  return ops::linear<T>(x, weight_.value, has_bias_ ? &bias_.value : nullptr);
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out, const Saved<T>& saved) {
  return ops::linear_backward(saved_input(saved, "linear"), weight_.value, grad_out,
                              &weight_.grad, has_bias_ ? &bias_.grad : nullptr);
}

template <typename T>
Tensor<T> Linear<T>::jvp(const Tensor<T>& tangent, const Saved<T>&) const {
  return ops::linear<T>(tangent, weight_.value, nullptr);
}

template <typename T>
void Linear<T>::initialize(std::mt19937_64& rng) {
  fan_in_uniform(weight_.value, in_features_, rng);
  if (has_bias_) fan_in_uniform(bias_.value, in_features_, rng);
}

template <typename T>
std::vector<Parameter<T>*> Linear<T>::parameters() {
  if (has_bias_) return {&weight_, &bias_};
  return {&weight_};
}

// --- BatchNorm --------------------------------------------------------------

template <typename T>
BatchNorm<T>::BatchNorm(int channels, double momentum, double eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      scale_(make_parameter<T>("scale", {channels}, T(1))),
      shift_(make_parameter<T>("shift", {channels}, T(0))),
      running_mean_(make_parameter<T>("running_mean", {channels}, T(0))),
      running_var_(make_parameter<T>("running_var", {channels}, T(1))) {
  if (channels < 1) throw ConfigError("batch_norm: invalid channel count");
}

template <typename T>
std::vector<int> BatchNorm<T>::output_shape(const std::vector<int>& s) const {
  if (s.empty() || s[0] != channels_) {
    throw ConfigError("batch_norm expects " + std::to_string(channels_) + " channels, got " +
                      shape_to_string(s));
  }
  return s;
}

// Saved layout: tensors[0] = normalized input, tensors[1] = (C, 3) rows of
// (batch mean, biased batch variance, inverse std actually applied).
template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const {
  if (x.rank() < 2 || x.dim(1) != channels_) {
    throw ConfigError("batch_norm: bad input shape " + x.shape_string());
  }
  const int n = x.dim(0);
  const std::size_t plane = x.slice_size() / static_cast<std::size_t>(channels_);
  const double count = static_cast<double>(n) * static_cast<double>(plane);

  Tensor<T> stats({channels_, 3});
  Tensor<T> xhat(x.shape());
  Tensor<T> y(x.shape());
  for (int c = 0; c < channels_; ++c) {
    double mean = 0.0, var = 0.0, inv_std = 0.0;
    if (mode == Mode::kTrain) {
      for (int s = 0; s < n; ++s) {
        const T* src = x.slice(s) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) mean += src[i];
      }
      mean /= count;
      for (int s = 0; s < n; ++s) {
        const T* src = x.slice(s) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = src[i] - mean;
          var += d * d;
        }
      }
      var /= count;
      inv_std = 1.0 / std::sqrt(var + eps_);
    } else {
      mean = running_mean_.value[c];
      var = running_var_.value[c];
      inv_std = 1.0 / std::sqrt(var + eps_);
    }
    stats[c * 3 + 0] = static_cast<T>(mean);
    stats[c * 3 + 1] = static_cast<T>(var);
    stats[c * 3 + 2] = static_cast<T>(inv_std);
    const T m = static_cast<T>(mean), is = static_cast<T>(inv_std);
    const T gamma = scale_.value[c], beta = shift_.value[c];
    for (int s = 0; s < n; ++s) {
      const T* src = x.slice(s) + c * plane;
      T* xh = xhat.slice(s) + c * plane;
      T* dst = y.slice(s) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (src[i] - m) * is;
        dst[i] = gamma * xh[i] + beta;
      }
    }
  }
  if (saved) {
    saved->mode = mode;
    saved->input_shape = x.shape();
    saved->tensors = {std::move(xhat), std::move(stats)};
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& grad_out, const Saved<T>& saved) {
  const Tensor<T>& xhat = saved_input(saved, "batch_norm");
  const Tensor<T>& stats = saved.tensors.at(1);
  const int n = xhat.dim(0);
  const std::size_t plane = xhat.slice_size() / static_cast<std::size_t>(channels_);
  const double count = static_cast<double>(n) * static_cast<double>(plane);

  Tensor<T> dx(xhat.shape());
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int s = 0; s < n; ++s) {
      const T* dy = grad_out.slice(s) + c * plane;
      const T* xh = xhat.slice(s) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += static_cast<double>(dy[i]) * xh[i];
      }
    }
    scale_.grad[c] += static_cast<T>(sum_dy_xhat);
    shift_.grad[c] += static_cast<T>(sum_dy);
    const double gamma = scale_.value[c];
    const double inv_std = stats[c * 3 + 2];
    for (int s = 0; s < n; ++s) {
      const T* dy = grad_out.slice(s) + c * plane;
      const T* xh = xhat.slice(s) + c * plane;
      T* out = dx.slice(s) + c * plane;
      if (saved.mode == Mode::kTrain) {
        const double k = gamma * inv_std / count;
        for (std::size_t i = 0; i < plane; ++i) {
          out[i] = static_cast<T>(k * (count * dy[i] - sum_dy - xh[i] * sum_dy_xhat));
        }
      } else {
        const T k = static_cast<T>(gamma * inv_std);
        for (std::size_t i = 0; i < plane; ++i) out[i] = k * dy[i];
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> BatchNorm<T>::jvp(const Tensor<T>& tangent, const Saved<T>& saved) const {
  if (saved.mode != Mode::kInfer) {
    throw ConfigError("batch_norm: jacobian-vector products need an inference-mode forward");
  }
  const Tensor<T>& stats = saved.tensors.at(1);
  const int n = tangent.dim(0);
  const std::size_t plane = tangent.slice_size() / static_cast<std::size_t>(channels_);
  Tensor<T> out(tangent.shape());
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < channels_; ++c) {
      const T k = scale_.value[c] * stats[c * 3 + 2];
      const T* src = tangent.slice(s) + c * plane;
      T* dst = out.slice(s) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = k * src[i];
    }
  }
  return out;
}

template <typename T>
void BatchNorm<T>::commit_statistics(const Saved<T>& saved) {
  if (saved.mode != Mode::kTrain) return;
  const Tensor<T>& stats = saved.tensors.at(1);
  const double count = static_cast<double>(shape_volume(saved.input_shape)) / channels_;
  const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
  for (int c = 0; c < channels_; ++c) {
    running_mean_.value[c] = static_cast<T>(momentum_ * running_mean_.value[c] +
                                            (1.0 - momentum_) * stats[c * 3 + 0]);
    running_var_.value[c] = static_cast<T>(momentum_ * running_var_.value[c] +
                                           (1.0 - momentum_) * stats[c * 3 + 1] * unbias);
  }
}

template <typename T>
std::vector<Parameter<T>*> BatchNorm<T>::parameters() {
  return {&scale_, &shift_};
}

template <typename T>
std::vector<Parameter<T>*> BatchNorm<T>::buffers() {
  return {&running_mean_, &running_var_};
}

// --- Activation -------------------------------------------------------------

std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::kNone: return "none";
    case ActivationKind::kLeakyRelu: return "leaky_relu";
    case ActivationKind::kRelu: return "relu";
    case ActivationKind::kTanh: return "tanh";
    case ActivationKind::kSigmoid: return "sigmoid";
  }
  return "none";
}

ActivationKind activation_from_string(const std::string& name) {
  for (auto k : {ActivationKind::kNone, ActivationKind::kLeakyRelu, ActivationKind::kRelu,
                 ActivationKind::kTanh, ActivationKind::kSigmoid}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown activation '" + name + "'");
}

template <typename T>
Activation<T>::Activation(ActivationKind kind, double negative_slope)
    : kind_(kind), slope_(static_cast<T>(negative_slope)) {}

template <typename T>
Tensor<T> Activation<T>::forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const {
  Tensor<T> y(x.shape());
  const std::size_t n = x.size();
  switch (kind_) {
    case ActivationKind::kNone:
      y = x;
      break;
    case ActivationKind::kLeakyRelu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : slope_ * x[i];
      break;
    case ActivationKind::kRelu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
      break;
    case ActivationKind::kTanh:
      for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
      break;
    case ActivationKind::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
      break;
  }
  if (saved) {
    saved->mode = mode;
    // Piecewise-linear activations keep their input, smooth ones their output.
    const bool keep_output = kind_ == ActivationKind::kTanh || kind_ == ActivationKind::kSigmoid;
    saved->tensors = {keep_output ? y : x};
  }
  return y;
}

template <typename T>
Tensor<T> Activation<T>::derivative(const Saved<T>& saved) const {
  const Tensor<T>& p = saved_input(saved, "activation");
  Tensor<T> d(p.shape());
  const std::size_t n = p.size();
  switch (kind_) {
    case ActivationKind::kNone:
      d.fill(T(1));
      break;
    case ActivationKind::kLeakyRelu:
      for (std::size_t i = 0; i < n; ++i) d[i] = p[i] > T(0) ? T(1) : slope_;
      break;
    case ActivationKind::kRelu:
      for (std::size_t i = 0; i < n; ++i) d[i] = p[i] > T(0) ? T(1) : T(0);
      break;
    case ActivationKind::kTanh:
      for (std::size_t i = 0; i < n; ++i) d[i] = T(1) - p[i] * p[i];
      break;
    case ActivationKind::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) d[i] = p[i] * (T(1) - p[i]);
      break;
  }
  return d;
}

template <typename T>
Tensor<T> Activation<T>::backward(const Tensor<T>& grad_out, const Saved<T>& saved) {
  Tensor<T> d = derivative(saved);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] *= grad_out[i];
  return d;
}

template <typename T>
Tensor<T> Activation<T>::jvp(const Tensor<T>& tangent, const Saved<T>& saved) const {
  const Tensor<T> d = derivative(saved);
  Tensor<T> out(tangent.shape());
  const std::size_t period = d.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[i % period] * tangent[i];
  return out;
}

// --- GlobalAvgPool ----------------------------------------------------------

template <typename T>
std::vector<int> GlobalAvgPool<T>::output_shape(const std::vector<int>& s) const {
  if (s.size() != 3) throw ConfigError("global_avg_pool expects (C, H, W)");
  return {s[0]};
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const {
  if (x.rank() != 4) throw ConfigError("global_avg_pool expects (N, C, H, W)");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor<T> y({n, c});
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      const T* src = x.slice(s) + ch * plane;
      T acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += src[i];
      y[static_cast<std::size_t>(s) * c + ch] = acc / static_cast<T>(plane);
    }
  }
  if (saved) {
    saved->mode = mode;
    saved->input_shape = x.shape();
    saved->tensors.clear();
  }
  return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out, const Saved<T>& saved) {
  Tensor<T> dx(saved.input_shape);
  const int n = dx.dim(0), c = dx.dim(1);
  const std::size_t plane = static_cast<std::size_t>(dx.dim(2)) * dx.dim(3);
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      const T g = grad_out[static_cast<std::size_t>(s) * c + ch] / static_cast<T>(plane);
      std::fill(dx.slice(s) + ch * plane, dx.slice(s) + (ch + 1) * plane, g);
    }
  }
  return dx;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::jvp(const Tensor<T>& tangent, const Saved<T>&) const {
  return forward(tangent, Mode::kInfer, nullptr);
}

// --- Reshape ----------------------------------------------------------------

template <typename T>
std::vector<int> Reshape<T>::output_shape(const std::vector<int>& s) const {
  if (shape_volume(s) != shape_volume(target_)) {
    throw ConfigError("reshape: cannot map " + shape_to_string(s) + " to " +
                      shape_to_string(target_));
  }
  return target_;
}

template <typename T>
Tensor<T> Reshape<T>::forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const {
  if (saved) {
    saved->mode = mode;
    saved->input_shape = x.shape();
    saved->tensors.clear();
  }
  std::vector<int> shape{x.dim(0)};
  shape.insert(shape.end(), target_.begin(), target_.end());
  return x.reshaped(std::move(shape));
}

template <typename T>
Tensor<T> Reshape<T>::backward(const Tensor<T>& grad_out, const Saved<T>& saved) {
  return grad_out.reshaped(saved.input_shape);
}

template <typename T>
Tensor<T> Reshape<T>::jvp(const Tensor<T>& tangent, const Saved<T>&) const {
  return forward(tangent, Mode::kInfer, nullptr);
}

// --- Crop -------------------------------------------------------------------

template <typename T>
std::vector<int> Crop<T>::output_shape(const std::vector<int>& s) const {
  if (s.size() != 3 || s[1] < height_ || s[2] < width_) {
    throw ConfigError("crop: cannot take " + std::to_string(height_) + "x" +
                      std::to_string(width_) + " from " + shape_to_string(s));
  }
  return {s[0], height_, width_};
}

template <typename T>
Tensor<T> Crop<T>::forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const {
  output_shape({x.dim(1), x.dim(2), x.dim(3)});
  const int n = x.dim(0), c = x.dim(1);
  Tensor<T> y({n, c, height_, width_});
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      for (int i = 0; i < height_; ++i) {
        const T* src = &x.at(s, ch, i, 0);
        std::copy(src, src + width_, &y.at(s, ch, i, 0));
      }
    }
  }
  if (saved) {
    saved->mode = mode;
    saved->input_shape = x.shape();
    saved->tensors.clear();
  }
  return y;
}

template <typename T>
Tensor<T> Crop<T>::backward(const Tensor<T>& grad_out, const Saved<T>& saved) {
  Tensor<T> dx(saved.input_shape);
  const int n = dx.dim(0), c = dx.dim(1);
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      for (int i = 0; i < height_; ++i) {
        const T* src = &grad_out.at(s, ch, i, 0);
        std::copy(src, src + width_, &dx.at(s, ch, i, 0));
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> Crop<T>::jvp(const Tensor<T>& tangent, const Saved<T>&) const {
  return forward(tangent, Mode::kInfer, nullptr);
}

#define RAOC_INSTANTIATE_LAYERS(T)                                          \
  template void fan_in_uniform<T>(Tensor<T>&, int, std::mt19937_64&);       \
  template class Layer<T>;                                                  \
  template class Conv2d<T>;                                                 \
  template class ConvTranspose2d<T>;                                        \
  template class Linear<T>;                                                 \
  template class BatchNorm<T>;                                              \
  template class Activation<T>;                                             \
  template class GlobalAvgPool<T>;                                          \
  template class Reshape<T>;                                                \
  template class Crop<T>;

RAOC_INSTANTIATE_LAYERS(float)
RAOC_INSTANTIATE_LAYERS(double)
#undef RAOC_INSTANTIATE_LAYERS

}  // namespace raoc
