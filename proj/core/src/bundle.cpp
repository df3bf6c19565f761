#include "raoc/bundle.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json_io.hpp"

namespace raoc {

using detail::Json;

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  return v;
}

void put_f32(std::string& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float get_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

ModelBundle make_bundle(TrainedUser user, const EvaluationConfig& config) {
  ModelBundle b;
  b.user = std::move(user);
  b.user.log.steps.clear();
  b.user.calibration_scores.clear();
  b.train = config.train;
  b.preprocess = config.preprocess;
  return b;
}

std::string serialize_bundle(const ModelBundle& bundle) {
  const TrainedUser& u = bundle.user;
  Json tensors = Json::array();
  std::uint64_t offset = 0;
  for (const Parameter<float>* p : u.model.state()) {
    const std::uint64_t bytes = 4 * p->value.size();
    tensors.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  Json m;
  m["format_version"] = bundle.format_version;
  m["user_id"] = u.user_id;
  m["network"] = detail::to_json(u.model.spec());
  m["train"] = detail::to_json(bundle.train);
  m["preprocess"] = detail::to_json(bundle.preprocess);
  m["normalization"] = detail::to_json(u.stats);
  m["tail"] = detail::to_json(u.tail);
  m["tau"] = u.tau;
  m["origin"] = to_string(u.origin);
  m["seed"] = u.model.seed();
  m["train_windows"] = u.train_windows;
  m["tensors"] = std::move(tensors);
  m["blob_bytes"] = offset;
  const std::string manifest = m.dump();

  std::string out(kBundleMagic.begin(), kBundleMagic.end());
  put_u64(out, manifest.size());
  out += manifest;
  out.reserve(out.size() + offset);
  for (const Parameter<float>* p : u.model.state()) {
    for (float f : p->value.values()) put_f32(out, f);
  }
  return out;
}

ModelBundle parse_bundle(std::string_view bytes) {
  if (bytes.size() < 16 || !std::equal(kBundleMagic.begin(), kBundleMagic.end(), bytes.begin())) {
    throw IoError("not a model bundle (bad magic)");
  }
  const std::uint64_t manifest_size = get_u64(bytes.substr(8, 8));
  if (manifest_size > bytes.size() - 16) throw IoError("model bundle truncated inside the manifest");
  const std::string_view manifest_text = bytes.substr(16, manifest_size);
  const std::string_view blob = bytes.substr(16 + manifest_size);

  Json m;
  try {
    m = Json::parse(manifest_text);
  } catch (const Json::parse_error& e) {
    throw IoError(std::string("model bundle manifest is not valid JSON: ") + e.what());
  }
  if (!m.is_object() || !m.contains("format_version") || !m["format_version"].is_number_integer()) {
    throw IoError("model bundle manifest has no format_version");
  }
  const int version = m["format_version"].get<int>();
  if (version != kBundleFormatVersion) {
    throw IoError("model bundle format version " + std::to_string(version) +
                  " does not match supported version " + std::to_string(kBundleFormatVersion));
  }

  ModelBundle b;
  try {
    TrainedUser& u = b.user;
    u.user_id = m.at("user_id").get<std::string>();
    b.train = detail::train_from_json(m.at("train"), "train");
    b.preprocess = detail::preprocess_from_json(m.at("preprocess"), "preprocess");
    u.stats = detail::normalization_from_json(m.at("normalization"), "normalization");
    u.tail = detail::tail_from_json(m.at("tail"), "tail");
    u.tau = m.at("tau").get<double>();
    u.origin = residual_origin_from_string(m.at("origin").get<std::string>());
    u.train_windows = m.at("train_windows").get<std::size_t>();
    u.model = Model(detail::network_from_json(m.at("network"), "network"), m.at("seed").get<std::uint64_t>());

    const Json& index = m.at("tensors");
    const std::vector<Parameter<float>*> state = u.model.state();
    if (index.size() != state.size()) {
      throw IoError("model bundle lists " + std::to_string(index.size()) + " tensors, network has " +
                    std::to_string(state.size()));
    }
    std::uint64_t expected = 0;
    for (std::size_t i = 0; i < state.size(); ++i) {
      Parameter<float>& p = *state[i];
      const Json& entry = index[i];
      const auto shape = entry.at("shape").get<std::vector<int>>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto size = entry.at("bytes").get<std::uint64_t>();
      if (entry.at("name").get<std::string>() != p.name || shape != p.value.shape() ||
          offset != expected || size != 4 * p.value.size()) {
        throw IoError("model bundle tensor '" + entry.at("name").get<std::string>() +
                      "' does not match network tensor '" + p.name + "' " + p.value.shape_string());
      }
      expected += size;
    }
    if (expected != blob.size() || m.at("blob_bytes").get<std::uint64_t>() != blob.size()) {
      throw IoError("model bundle weight blob holds " + std::to_string(blob.size()) +
                    " bytes, manifest describes " + std::to_string(expected));
    }
    const char* cursor = blob.data();
    for (Parameter<float>* p : state) {
      for (float& f : p->value.values()) {
        f = get_f32(cursor);
        cursor += 4;
      }
    }
  } catch (const Json::exception& e) {
    throw IoError(std::string("malformed model bundle manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("malformed model bundle manifest: ") + e.what());
  }
  return b;
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  const std::string bytes = serialize_bundle(bundle);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open bundle '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_bundle(buf.str());
}

}  // namespace raoc
