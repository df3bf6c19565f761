#include "raoc/config.hpp"

#include <fstream>
#include <sstream>

#include "json_io.hpp"

namespace raoc {

using detail::Json;
using detail::StrictObject;

namespace {

Json parse_json(const std::string& text, const char* what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string resolve(const std::string& path, const std::filesystem::path& base) {
  if (path.empty() || base.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (base / path).lexically_normal().string();
}

}  // namespace

void RunConfig::validate() const {
  evaluation.validate();
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

void RunConfig::set_seed(std::uint64_t seed) {
  evaluation.train.seed = seed;
  evaluation.split_seed = seed;
}

RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  const Json j = parse_json(json_text, "configuration");
  RunConfig c;
  EvaluationConfig& e = c.evaluation;
  StrictObject root(j, "");
  root.read("data", c.data);
  root.read("output_dir", c.output_dir);
  root.read("user", c.user);
  root.read("users", c.users);
  root.read("attackers", c.attackers);
  if (root.has("preprocess")) e.preprocess = detail::preprocess_from_json(root.child("preprocess"), "preprocess");
  if (root.has("train")) e.train = detail::train_from_json(root.child("train"), "train");
  if (root.has("architecture")) {
    StrictObject o(root.child("architecture"), "architecture");
    o.read("latent_dim", e.architecture.latent_dim);
    o.read("base_channels", e.architecture.base_channels);
    o.finish();
  }
  if (root.has("attention")) {
    StrictObject o(root.child("attention"), "attention");
    o.read("neighborhood", e.architecture.neighborhood);
    o.read("projection_kernel", e.architecture.projection_kernel);
    o.finish();
  }
  if (root.has("evaluation")) {
    StrictObject o(root.child("evaluation"), "evaluation");
    std::string origin = to_string(e.origin);
    o.read("target_tpr", e.target_tpr);
    o.read("origin", origin);
    o.read("train_fraction", e.train_fraction);
    o.read("calibration_fraction", e.calibration_fraction);
    o.read("split_seed", e.split_seed);
    o.read("max_impostor_windows", e.max_impostor_windows);
    o.read("folds", e.folds);
    o.read("sweep_sizes_s", e.sweep_sizes_s);
    o.finish();
    e.origin = residual_origin_from_string(origin);
  }
  root.finish();
  c.data = resolve(c.data, base_dir);
  for (std::string& a : c.attackers) a = resolve(a, base_dir);
  e.architecture.window_length = e.preprocess.window_length();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_text(path), path.parent_path());
}

std::string run_config_to_json(const RunConfig& c) {
  const EvaluationConfig& e = c.evaluation;
  Json j;
  j["data"] = c.data;
  j["output_dir"] = c.output_dir;
  j["user"] = c.user;
  j["users"] = c.users;
  j["attackers"] = c.attackers;
  j["preprocess"] = detail::to_json(e.preprocess);
  j["architecture"] = {{"latent_dim", e.architecture.latent_dim},
                       {"base_channels", e.architecture.base_channels}};
  j["attention"] = {{"neighborhood", e.architecture.neighborhood},
                    {"projection_kernel", e.architecture.projection_kernel}};
  j["train"] = detail::to_json(e.train);
  j["evaluation"] = {{"target_tpr", e.target_tpr},
                     {"origin", to_string(e.origin)},
                     {"train_fraction", e.train_fraction},
                     {"calibration_fraction", e.calibration_fraction},
                     {"split_seed", e.split_seed},
                     {"max_impostor_windows", e.max_impostor_windows},
                     {"folds", e.folds},
                     {"sweep_sizes_s", e.sweep_sizes_s}};
  return j.dump(2) + "\n";
}

SyntheticFamilySpec parse_family_spec(const std::string& json_text) {
  SyntheticFamilySpec spec = detail::family_from_json(parse_json(json_text, "family spec"), "");
  spec.validate();
  return spec;
}

SyntheticFamilySpec load_family_spec(const std::filesystem::path& path) {
  return parse_family_spec(read_text(path));
}

std::string family_spec_to_json(const SyntheticFamilySpec& spec) {
  return detail::to_json(spec).dump(2) + "\n";
}

}  // namespace raoc
