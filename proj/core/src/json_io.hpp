#pragma once

// JSON conversions shared by the run configuration and the bundle manifest.
// Readers start from defaults, accept any subset of keys and reject keys they
// do not know, naming them by their dotted path.

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "raoc/errors.hpp"
#include "raoc/evaluation.hpp"
#include "raoc/ingestion.hpp"
#include "raoc/networks.hpp"
#include "raoc/preprocessing.hpp"
#include "raoc/scoring.hpp"
#include "raoc/training.hpp"

namespace raoc::detail {

using Json = nlohmann::json;

// Throws ConfigError on unknown keys or mistyped values.
class StrictObject {
 public:
  StrictObject(const Json& object, std::string path);

  bool has(const char* key) const { return object_.contains(key); }

  template <typename T>
  void read(const char* key, T& field) {
    if (!object_.contains(key)) return;
    seen_.insert(key);
    try {
      field = object_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + qualified(key) + "' has the wrong type");
    }
  }

  const Json& child(const char* key);
  std::string qualified(const std::string& key) const;
  // Rejects every key no read() or child() asked for.
  void finish() const;

 private:
  const Json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

Json to_json(const PreprocessConfig& c);
PreprocessConfig preprocess_from_json(const Json& j, const std::string& path);

Json to_json(const TrainConfig& c);
TrainConfig train_from_json(const Json& j, const std::string& path);

Json to_json(const LayerDescriptor& d);
LayerDescriptor layer_from_json(const Json& j, const std::string& path);

Json to_json(const NetworkSpec& s);
NetworkSpec network_from_json(const Json& j, const std::string& path);

Json to_json(const NormalizationStats& s);
NormalizationStats normalization_from_json(const Json& j, const std::string& path);

Json to_json(const ResidualTailDensity& t);
ResidualTailDensity tail_from_json(const Json& j, const std::string& path);

Json to_json(const SyntheticFamilySpec& s);
SyntheticFamilySpec family_from_json(const Json& j, const std::string& path);

}  // namespace raoc::detail
