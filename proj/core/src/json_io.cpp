#include "json_io.hpp"

namespace raoc::detail {

StrictObject::StrictObject(const Json& object, std::string path)
    : object_(object), path_(std::move(path)) {
  if (!object_.is_object()) {
    throw ConfigError("config section '" + (path_.empty() ? std::string("<root>") : path_) +
                      "' must be a JSON object");
  }
}

const Json& StrictObject::child(const char* key) {
  seen_.insert(key);
  return object_.at(key);
}

std::string StrictObject::qualified(const std::string& key) const {
  return path_.empty() ? key : path_ + "." + key;
}

void StrictObject::finish() const {
  for (const auto& [key, value] : object_.items()) {
    if (!seen_.contains(key)) throw ConfigError("unknown config key '" + qualified(key) + "'");
  }
}

Json to_json(const PreprocessConfig& c) {
  return {{"peak_mad_k", c.peak_mad_k},       {"median_window", c.median_window},
          {"flat_window_s", c.flat_window_s}, {"flat_var_eps", c.flat_var_eps},
          {"rate_hz", c.rate_hz},             {"window_s", c.window_s}};
}

PreprocessConfig preprocess_from_json(const Json& j, const std::string& path) {
  PreprocessConfig c;
  StrictObject o(j, path);
  o.read("peak_mad_k", c.peak_mad_k);
  o.read("median_window", c.median_window);
  o.read("flat_window_s", c.flat_window_s);
  o.read("flat_var_eps", c.flat_var_eps);
  o.read("rate_hz", c.rate_hz);
  o.read("window_s", c.window_s);
  o.finish();
  return c;
}

Json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr_encoder", c.lr_encoder},
          {"lr_decoder", c.lr_decoder},
          {"lr_latent_disc", c.lr_latent_disc},
          {"lr_sample_disc", c.lr_sample_disc},
          {"lambda_rec", c.lambda_rec},
          {"noise_std", c.noise_std},
          {"seed", c.seed},
          {"adversarial_weight", c.adversarial_weight},
          {"max_steps", c.max_steps},
          {"log_constant_terms", c.log_constant_terms}};
}

TrainConfig train_from_json(const Json& j, const std::string& path) {
  TrainConfig c;
  StrictObject o(j, path);
  o.read("epochs", c.epochs);
  o.read("batch_size", c.batch_size);
  o.read("lr_encoder", c.lr_encoder);
  o.read("lr_decoder", c.lr_decoder);
  o.read("lr_latent_disc", c.lr_latent_disc);
  o.read("lr_sample_disc", c.lr_sample_disc);
  o.read("lambda_rec", c.lambda_rec);
  o.read("noise_std", c.noise_std);
  o.read("seed", c.seed);
  o.read("adversarial_weight", c.adversarial_weight);
  o.read("max_steps", c.max_steps);
  o.read("log_constant_terms", c.log_constant_terms);
  o.finish();
  return c;
}

Json to_json(const LayerDescriptor& d) {
  return {{"kind", to_string(d.kind)},
          {"channels", d.channels},
          {"kernel", d.kernel},
          {"stride", d.stride},
          {"padding", d.padding},
          {"output_padding", d.output_padding},
          {"height", d.height},
          {"width", d.width},
          {"neighborhood", d.neighborhood},
          {"projection_kernel", d.projection_kernel},
          {"batch_norm", d.batch_norm},
          {"activation", to_string(d.activation)}};
}

LayerDescriptor layer_from_json(const Json& j, const std::string& path) {
  LayerDescriptor d;
  StrictObject o(j, path);
  std::string kind = to_string(d.kind);
  std::string activation = to_string(d.activation);
  o.read("kind", kind);
  o.read("channels", d.channels);
  o.read("kernel", d.kernel);
  o.read("stride", d.stride);
  o.read("padding", d.padding);
  o.read("output_padding", d.output_padding);
  o.read("height", d.height);
  o.read("width", d.width);
  o.read("neighborhood", d.neighborhood);
  o.read("projection_kernel", d.projection_kernel);
  o.read("batch_norm", d.batch_norm);
  o.read("activation", activation);
  o.finish();
  d.kind = layer_kind_from_string(kind);
  d.activation = activation_from_string(activation);
  return d;
}

namespace {

Json stack_to_json(const std::vector<LayerDescriptor>& stack) {
  Json out = Json::array();
  for (const LayerDescriptor& d : stack) out.push_back(to_json(d));
  return out;
}

std::vector<LayerDescriptor> stack_from_json(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError("config key '" + path + "' must be an array");
  std::vector<LayerDescriptor> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(layer_from_json(j[i], path + "." + std::to_string(i)));
  }
  return out;
}

}  // namespace

Json to_json(const NetworkSpec& s) {
  return {{"input_height", s.input_height}, {"input_width", s.input_width},
          {"latent_dim", s.latent_dim},     {"encoder", stack_to_json(s.encoder)},
          {"decoder", stack_to_json(s.decoder)}, {"latent_disc", stack_to_json(s.latent_disc)},
          {"sample_disc", stack_to_json(s.sample_disc)}};
}

NetworkSpec network_from_json(const Json& j, const std::string& path) {
  NetworkSpec s;
  StrictObject o(j, path);
  o.read("input_height", s.input_height);
  o.read("input_width", s.input_width);
  o.read("latent_dim", s.latent_dim);
  const std::pair<const char*, std::vector<LayerDescriptor>*> stacks[] = {
      {"encoder", &s.encoder},
      {"decoder", &s.decoder},
      {"latent_disc", &s.latent_disc},
      {"sample_disc", &s.sample_disc}};
  for (const auto& [key, stack] : stacks) {
    if (o.has(key)) *stack = stack_from_json(o.child(key), o.qualified(key));
  }
  o.finish();
  return s;
}

Json to_json(const NormalizationStats& s) { return {{"min", s.min}, {"max", s.max}}; }

NormalizationStats normalization_from_json(const Json& j, const std::string& path) {
  NormalizationStats s;
  StrictObject o(j, path);
  o.read("min", s.min);
  o.read("max", s.max);
  o.finish();
  return s;
}

Json to_json(const ResidualTailDensity& t) {
  return {{"bin_edges", t.bin_edges},
          {"bin_log_densities", t.bin_log_densities},
          {"floor", t.floor},
          {"sample_count", t.sample_count},
          {"interpolate", t.interpolate}};
}

ResidualTailDensity tail_from_json(const Json& j, const std::string& path) {
  ResidualTailDensity t;
  StrictObject o(j, path);
  o.read("bin_edges", t.bin_edges);
  o.read("bin_log_densities", t.bin_log_densities);
  o.read("floor", t.floor);
  o.read("sample_count", t.sample_count);
  o.read("interpolate", t.interpolate);
  o.finish();
  if (t.fitted() && t.bin_edges.size() != t.bin_log_densities.size() + 1) {
    throw ConfigError("'" + path + "' needs one more bin edge than densities");
  }
  return t;
}

Json to_json(const SyntheticFamilySpec& s) {
  return {{"family", s.family},
          {"users", s.users},
          {"sessions", s.sessions},
          {"sinusoids_per_channel", s.sinusoids_per_channel},
          {"duration_s", s.duration_s},
          {"rate_hz", s.rate_hz},
          {"noise_std", s.noise_std},
          {"seed", s.seed},
          {"user_prefix", s.user_prefix}};
}

SyntheticFamilySpec family_from_json(const Json& j, const std::string& path) {
  SyntheticFamilySpec s;
  StrictObject o(j, path);
  o.read("family", s.family);
  o.read("users", s.users);
  o.read("sessions", s.sessions);
  o.read("sinusoids_per_channel", s.sinusoids_per_channel);
  o.read("duration_s", s.duration_s);
  o.read("rate_hz", s.rate_hz);
  o.read("noise_std", s.noise_std);
  o.read("seed", s.seed);
  o.read("user_prefix", s.user_prefix);
  o.finish();
  return s;
}

}  // namespace raoc::detail
