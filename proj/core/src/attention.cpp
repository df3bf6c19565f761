#include "raoc/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "raoc/errors.hpp"

namespace raoc {

void AttentionConfig::validate() const {
  if (in_channels < 1 || out_channels < 1) {
    throw ConfigError("attention: channel counts must be >= 1");
  }
  if (neighborhood < 1 || neighborhood % 2 == 0) {
    throw ConfigError("attention: neighborhood must be odd and >= 1, got " +
                      std::to_string(neighborhood));
  }
  if (projection_kernel < 1 || projection_kernel % 2 == 0) {
    throw ConfigError("attention: projection_kernel must be odd and >= 1, got " +
                      std::to_string(projection_kernel));
  }
}

template <typename T>
AttentionParams<T> AttentionParams<T>::zeros(const AttentionConfig& config) {
  config.validate();
  const int p = config.projection_kernel;
  const std::vector<int> w{config.out_channels, config.in_channels, p, p};
  const std::vector<int> b{config.projection_bias ? config.out_channels : 0};
  return {Tensor<T>(w), Tensor<T>(w), Tensor<T>(w), Tensor<T>(b), Tensor<T>(b), Tensor<T>(b)};
}

template <typename T>
void AttentionParams<T>::validate(const AttentionConfig& config) const {
  const int p = config.projection_kernel;
  const std::vector<int> w{config.out_channels, config.in_channels, p, p};
  for (const Tensor<T>* t : {&query_weights, &key_weights, &value_weights}) {
    if (t->shape() != w) {
      throw ConfigError("attention: projection weight " + t->shape_string() +
                        " does not match expected " + shape_to_string(w));
    }
    if (!t->all_finite()) throw NumericError("attention: non-finite projection weight");
  }
  for (const Tensor<T>* t : {&query_bias, &key_bias, &value_bias}) {
    const bool ok = config.projection_bias ? (t->rank() == 1 && t->dim(0) == config.out_channels)
                                           : t->size() == 0;
    if (!ok) throw ConfigError("attention: projection bias shape " + t->shape_string());
  }
}

namespace {

ops::ConvGeometry projection_geometry(const AttentionConfig& config) {
  return {config.projection_kernel, 1, config.projection_kernel / 2};
}

template <typename T>
const Tensor<T>* bias_or_null(const Tensor<T>& b) {
  return b.size() ? &b : nullptr;
}

// (N, C, H, W) -> (N, H*W, C).
template <typename T>
Tensor<T> to_position_major(const Tensor<T>& x) {
  const int n = x.dim(0), c = x.dim(1), p = x.dim(2) * x.dim(3);
  Tensor<T> out({n, p, c});
  for (int s = 0; s < n; ++s) {
    RowMatrixMap<T>(out.slice(s), p, c) = ConstRowMatrixMap<T>(x.slice(s), c, p).transpose();
  }
  return out;
}

// (N, H*W, C) -> (N, C, H, W).
template <typename T>
Tensor<T> to_channel_first(const Tensor<T>& x, int height, int width) {
  const int n = x.dim(0), p = x.dim(1), c = x.dim(2);
  Tensor<T> out({n, c, height, width});
  for (int s = 0; s < n; ++s) {
    RowMatrixMap<T>(out.slice(s), c, p) = ConstRowMatrixMap<T>(x.slice(s), p, c).transpose();
  }
  return out;
}

template <typename T>
inline T dot(const T* a, const T* b, int n) {
  T acc = 0;
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

struct Window {
  int a0, a1, b0, b1;  // inclusive row/column bounds of the clipped grid
};

inline Window clipped_window(int i, int j, int height, int width, int radius) {
  return {std::max(0, i - radius), std::min(height - 1, i + radius), std::max(0, j - radius),
          std::min(width - 1, j + radius)};
}

template <typename T>
Tensor<T> forward_impl(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>* bq,
                       const Tensor<T>& wk, const Tensor<T>* bk, const Tensor<T>& wv,
                       const Tensor<T>* bv, const AttentionConfig& config,
                       AttentionTrace<T>& trace) {
  if (x.rank() != 4 || x.dim(1) != config.in_channels) {
    throw ConfigError("attention: input " + x.shape_string() + " does not have " +
                      std::to_string(config.in_channels) + " channels");
  }
  if (!x.all_finite()) throw NumericError("attention: non-finite input");

  const auto g = projection_geometry(config);
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int c = config.out_channels;
  const int k = config.neighborhood, r = config.radius(), slots = config.slots();

  trace.queries = to_position_major(ops::conv2d(x, wq, bq, g));
  trace.keys = to_position_major(ops::conv2d(x, wk, bk, g));
  trace.values = to_position_major(ops::conv2d(x, wv, bv, g));
  trace.weights = Tensor<T>({n, h * w, slots});
  trace.height = h;
  trace.width = w;

  Tensor<T> y_pm({n, h * w, c});
  std::vector<T> logits(static_cast<std::size_t>(slots));
  for (int s = 0; s < n; ++s) {
    const T* q = trace.queries.slice(s);
    const T* kk = trace.keys.slice(s);
    const T* v = trace.values.slice(s);
    T* wts = trace.weights.slice(s);
    T* y = y_pm.slice(s);
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const int pos = i * w + j;
        const Window win = clipped_window(i, j, h, w, r);
        const T* qp = q + static_cast<std::size_t>(pos) * c;
        T max_logit = -std::numeric_limits<T>::infinity();
        for (int a = win.a0; a <= win.a1; ++a) {
          for (int b = win.b0; b <= win.b1; ++b) {
            const int slot = (a - i + r) * k + (b - j + r);
            const T l = dot(qp, kk + static_cast<std::size_t>(a * w + b) * c, c);
            logits[slot] = l;
            max_logit = std::max(max_logit, l);
          }
        }
        T* wp = wts + static_cast<std::size_t>(pos) * slots;
        T total = 0;
        for (int a = win.a0; a <= win.a1; ++a) {
          for (int b = win.b0; b <= win.b1; ++b) {
            const int slot = (a - i + r) * k + (b - j + r);
            wp[slot] = std::exp(logits[slot] - max_logit);
            total += wp[slot];
          }
        }
        T* yp = y + static_cast<std::size_t>(pos) * c;
        for (int a = win.a0; a <= win.a1; ++a) {
          for (int b = win.b0; b <= win.b1; ++b) {
            const int slot = (a - i + r) * k + (b - j + r);
            wp[slot] /= total;
            axpy(wp[slot], v + static_cast<std::size_t>(a * w + b) * c, yp, c);
          }
        }
      }
    }
  }
  return to_channel_first(y_pm, h, w);
}

// Gradients with respect to the position-major projections.
template <typename T>
void attention_core_backward(const AttentionTrace<T>& trace, const AttentionConfig& config,
                             const Tensor<T>& grad_out, Tensor<T>& dq, Tensor<T>& dk,
                             Tensor<T>& dv) {
  const int n = trace.queries.dim(0), h = trace.height, w = trace.width;
  const int c = config.out_channels;
  const int k = config.neighborhood, r = config.radius(), slots = config.slots();
  const Tensor<T> dy_pm = to_position_major(grad_out);
  dq = Tensor<T>(trace.queries.shape());
  dk = Tensor<T>(trace.keys.shape());
  dv = Tensor<T>(trace.values.shape());
  std::vector<T> dlogit(static_cast<std::size_t>(slots));

  for (int s = 0; s < n; ++s) {
    const T* q = trace.queries.slice(s);
    const T* kk = trace.keys.slice(s);
    const T* v = trace.values.slice(s);
    const T* wts = trace.weights.slice(s);
    const T* dy = dy_pm.slice(s);
    T* gq = dq.slice(s);
    T* gk = dk.slice(s);
    T* gv = dv.slice(s);
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const int pos = i * w + j;
        const Window win = clipped_window(i, j, h, w, r);
        const T* dyp = dy + static_cast<std::size_t>(pos) * c;
        const T* wp = wts + static_cast<std::size_t>(pos) * slots;
        T mean = 0;
        for (int a = win.a0; a <= win.a1; ++a) {
          for (int b = win.b0; b <= win.b1; ++b) {
            const int slot = (a - i + r) * k + (b - j + r);
            const std::size_t nb = static_cast<std::size_t>(a * w + b) * c;
            const T g = dot(dyp, v + nb, c);
            dlogit[slot] = g;
            mean += wp[slot] * g;
            axpy(wp[slot], dyp, gv + nb, c);
          }
        }
        const T* qp = q + static_cast<std::size_t>(pos) * c;
        T* gqp = gq + static_cast<std::size_t>(pos) * c;
        for (int a = win.a0; a <= win.a1; ++a) {
          for (int b = win.b0; b <= win.b1; ++b) {
            const int slot = (a - i + r) * k + (b - j + r);
            const std::size_t nb = static_cast<std::size_t>(a * w + b) * c;
            const T dl = wp[slot] * (dlogit[slot] - mean);
            axpy(dl, kk + nb, gqp, c);
            axpy(dl, qp, gk + nb, c);
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> backward_impl(const Tensor<T>& x, const Tensor<T>& wq, Tensor<T>* gwq, Tensor<T>* gbq,
                        const Tensor<T>& wk, Tensor<T>* gwk, Tensor<T>* gbk, const Tensor<T>& wv,
                        Tensor<T>* gwv, Tensor<T>* gbv, const AttentionConfig& config,
                        const AttentionTrace<T>& trace, const Tensor<T>& grad_out) {
  if (grad_out.rank() != 4 || grad_out.dim(1) != config.out_channels ||
      grad_out.dim(0) != x.dim(0) || grad_out.dim(2) != trace.height ||
      grad_out.dim(3) != trace.width) {
    throw ConfigError("attention: upstream gradient " + grad_out.shape_string() +
                      " does not match the forward output");
  }
  Tensor<T> dq, dk, dv;
  attention_core_backward(trace, config, grad_out, dq, dk, dv);
  const auto g = projection_geometry(config);
  const int h = trace.height, w = trace.width;
  Tensor<T> dx = ops::conv2d_backward(x, wq, to_channel_first(dq, h, w), g, gwq, gbq);
  const Tensor<T> dxk = ops::conv2d_backward(x, wk, to_channel_first(dk, h, w), g, gwk, gbk);
  const Tensor<T> dxv = ops::conv2d_backward(x, wv, to_channel_first(dv, h, w), g, gwv, gbv);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dxk[i] + dxv[i];
  return dx;
}

template <typename T>
Tensor<T> jvp_impl(const Tensor<T>& tangent, const Tensor<T>& wq, const Tensor<T>& wk,
                   const Tensor<T>& wv, const AttentionConfig& config,
                   const AttentionTrace<T>& trace) {
  const auto g = projection_geometry(config);
  const int h = trace.height, w = trace.width;
  const int c = config.out_channels;
  const int k = config.neighborhood, r = config.radius(), slots = config.slots();
  const int primal_batch = trace.queries.dim(0);
  const int n = tangent.dim(0);
  if (primal_batch != 1 && primal_batch != n) {
    throw ConfigError("attention: tangent batch does not broadcast against the primal batch");
  }

  const Tensor<T> tq = to_position_major(ops::conv2d<T>(tangent, wq, nullptr, g));
  const Tensor<T> tk = to_position_major(ops::conv2d<T>(tangent, wk, nullptr, g));
  const Tensor<T> tv = to_position_major(ops::conv2d<T>(tangent, wv, nullptr, g));
  Tensor<T> out_pm({n, h * w, c});
  std::vector<T> dlogit(static_cast<std::size_t>(slots));

  for (int s = 0; s < n; ++s) {
    const int ps = primal_batch == 1 ? 0 : s;
    const T* q = trace.queries.slice(ps);
    const T* kk = trace.keys.slice(ps);
    const T* v = trace.values.slice(ps);
    const T* wts = trace.weights.slice(ps);
    const T* dqs = tq.slice(s);
    const T* dks = tk.slice(s);
    const T* dvs = tv.slice(s);
    T* out = out_pm.slice(s);
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const int pos = i * w + j;
        const Window win = clipped_window(i, j, h, w, r);
        const T* qp = q + static_cast<std::size_t>(pos) * c;
        const T* dqp = dqs + static_cast<std::size_t>(pos) * c;
        const T* wp = wts + static_cast<std::size_t>(pos) * slots;
        T mean = 0;
        for (int a = win.a0; a <= win.a1; ++a) {
          for (int b = win.b0; b <= win.b1; ++b) {
            const int slot = (a - i + r) * k + (b - j + r);
            const std::size_t nb = static_cast<std::size_t>(a * w + b) * c;
            const T dl = dot(dqp, kk + nb, c) + dot(qp, dks + nb, c);
            dlogit[slot] = dl;
            mean += wp[slot] * dl;
          }
        }
        T* op = out + static_cast<std::size_t>(pos) * c;
        for (int a = win.a0; a <= win.a1; ++a) {
          for (int b = win.b0; b <= win.b1; ++b) {
            const int slot = (a - i + r) * k + (b - j + r);
            const std::size_t nb = static_cast<std::size_t>(a * w + b) * c;
            axpy(wp[slot] * (dlogit[slot] - mean), v + nb, op, c);
            axpy(wp[slot], dvs + nb, op, c);
          }
        }
      }
    }
  }
  return to_channel_first(out_pm, h, w);
}

}  // namespace

template <typename T>
Tensor<T> relative_attention_forward(const Tensor<T>& input, const AttentionParams<T>& params,
                                     const AttentionConfig& config, AttentionTrace<T>* trace) {
  config.validate();
  params.validate(config);
  AttentionTrace<T> local;
  AttentionTrace<T>& t = trace ? *trace : local;
  return forward_impl(input, params.query_weights, bias_or_null(params.query_bias),
                      params.key_weights, bias_or_null(params.key_bias), params.value_weights,
                      bias_or_null(params.value_bias), config, t);
}

template <typename T>
AttentionGradients<T> relative_attention_backward(const Tensor<T>& input,
                                                  const AttentionParams<T>& params,
                                                  const AttentionConfig& config,
                                                  const Tensor<T>& upstream_grad) {
  AttentionTrace<T> trace;
  relative_attention_forward(input, params, config, &trace);
  AttentionGradients<T> grads;
  grads.params = AttentionParams<T>::zeros(config);
  auto& gp = grads.params;
  const bool bias = config.projection_bias;
  grads.input = backward_impl(input, params.query_weights, &gp.query_weights,
                              bias ? &gp.query_bias : nullptr, params.key_weights,
                              &gp.key_weights, bias ? &gp.key_bias : nullptr,
                              params.value_weights, &gp.value_weights,
                              bias ? &gp.value_bias : nullptr, config, trace, upstream_grad);
  return grads;
}

// --- Layer wrapper ----------------------------------------------------------

namespace {

template <typename T>
Parameter<T> attention_parameter(std::string name, std::vector<int> shape) {
  Parameter<T> p;
  p.name = std::move(name);
  p.value = Tensor<T>(shape);
  p.grad = Tensor<T>(std::move(shape));
  return p;
}

// Saved layout for the layer: input, queries, keys, values, weights, (h, w).
template <typename T>
AttentionTrace<T> trace_from_saved(const Saved<T>& saved) {
  if (saved.tensors.size() != 5) {
    throw ConfigError("relative_attention: backward called without a saved forward");
  }
  AttentionTrace<T> trace;
  trace.queries = saved.tensors[1];
  trace.keys = saved.tensors[2];
  trace.values = saved.tensors[3];
  trace.weights = saved.tensors[4];
  trace.height = saved.tensors[0].dim(2);
  trace.width = saved.tensors[0].dim(3);
  return trace;
}

}  // namespace

template <typename T>
RelativeAttention<T>::RelativeAttention(AttentionConfig config) : config_(config) {
  config_.validate();
  const int p = config_.projection_kernel;
  const std::vector<int> w{config_.out_channels, config_.in_channels, p, p};
  const std::vector<int> b{config_.projection_bias ? config_.out_channels : 0};
  query_weight_ = attention_parameter<T>("query.weight", w);
  query_bias_ = attention_parameter<T>("query.bias", b);
  key_weight_ = attention_parameter<T>("key.weight", w);
  key_bias_ = attention_parameter<T>("key.bias", b);
  value_weight_ = attention_parameter<T>("value.weight", w);
  value_bias_ = attention_parameter<T>("value.bias", b);
}

template <typename T>
std::vector<int> RelativeAttention<T>::output_shape(const std::vector<int>& s) const {
  if (s.size() != 3 || s[0] != config_.in_channels) {
    throw ConfigError("relative_attention expects (" + std::to_string(config_.in_channels) +
                      ", H, W), got " + shape_to_string(s));
  }
  return {config_.out_channels, s[1], s[2]};
}

template <typename T>
Tensor<T> RelativeAttention<T>::forward(const Tensor<T>& x, Mode mode, Saved<T>* saved) const {
  AttentionTrace<T> trace;
  Tensor<T> y = forward_impl(x, query_weight_.value, bias_or_null(query_bias_.value),
                             key_weight_.value, bias_or_null(key_bias_.value),
                             value_weight_.value, bias_or_null(value_bias_.value), config_, trace);
  if (saved) {
    saved->mode = mode;
    saved->input_shape = x.shape();
    saved->tensors = {x, std::move(trace.queries), std::move(trace.keys),
                      std::move(trace.values), std::move(trace.weights)};
  }
  return y;
}

template <typename T>
Tensor<T> RelativeAttention<T>::backward(const Tensor<T>& grad_out, const Saved<T>& saved) {
  const AttentionTrace<T> trace = trace_from_saved(saved);
  const bool bias = config_.projection_bias;
  return backward_impl(saved.tensors[0], query_weight_.value, &query_weight_.grad,
                       bias ? &query_bias_.grad : nullptr, key_weight_.value, &key_weight_.grad,
                       bias ? &key_bias_.grad : nullptr, value_weight_.value,
                       &value_weight_.grad, bias ? &value_bias_.grad : nullptr, config_, trace,
                       grad_out);
}

template <typename T>
Tensor<T> RelativeAttention<T>::jvp(const Tensor<T>& tangent, const Saved<T>& saved) const {
  const AttentionTrace<T> trace = trace_from_saved(saved);
  return jvp_impl(tangent, query_weight_.value, key_weight_.value, value_weight_.value, config_,
                  trace);
}

template <typename T>
void RelativeAttention<T>::initialize(std::mt19937_64& rng) {
  const int fan_in = config_.in_channels * config_.projection_kernel * config_.projection_kernel;
  for (Parameter<T>* p : parameters()) fan_in_uniform(p->value, fan_in, rng);
}

template <typename T>
std::vector<Parameter<T>*> RelativeAttention<T>::parameters() {
  if (config_.projection_bias) {
    return {&query_weight_, &query_bias_, &key_weight_, &key_bias_, &value_weight_, &value_bias_};
  }
  return {&query_weight_, &key_weight_, &value_weight_};
}

template <typename T>
AttentionParams<T> RelativeAttention<T>::params() const {
  return {query_weight_.value, key_weight_.value, value_weight_.value,
          query_bias_.value,   key_bias_.value,   value_bias_.value};
}

template <typename T>
void RelativeAttention<T>::set_params(const AttentionParams<T>& params) {
  params.validate(config_);
  query_weight_.value = params.query_weights;
  key_weight_.value = params.key_weights;
  value_weight_.value = params.value_weights;
  query_bias_.value = params.query_bias;
  key_bias_.value = params.key_bias;
  value_bias_.value = params.value_bias;
}

#define RAOC_INSTANTIATE_ATTENTION(T)                                                        \
  template struct AttentionParams<T>;                                                        \
  template Tensor<T> relative_attention_forward<T>(const Tensor<T>&, const AttentionParams<T>&, \
                                                   const AttentionConfig&, AttentionTrace<T>*); \
  template AttentionGradients<T> relative_attention_backward<T>(                             \
      const Tensor<T>&, const AttentionParams<T>&, const AttentionConfig&, const Tensor<T>&); \
  template class RelativeAttention<T>;

RAOC_INSTANTIATE_ATTENTION(float)
RAOC_INSTANTIATE_ATTENTION(double)
#undef RAOC_INSTANTIATE_ATTENTION

}  // namespace raoc
