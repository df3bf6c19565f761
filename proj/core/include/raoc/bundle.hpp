#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "raoc/evaluation.hpp"
#include "raoc/preprocessing.hpp"
#include "raoc/training.hpp"

namespace raoc {

inline constexpr int kBundleFormatVersion = 1;
inline constexpr std::array<char, 8> kBundleMagic{'R', 'A', 'O', 'C', 'B', 'N', 'D', 'L'};

// On disk: the 8-byte magic, the manifest length as a little-endian u64, the
// manifest as compact JSON with sorted keys, then every tensor of the model
// as little-endian float32 in manifest order. The manifest records the
// format version, network spec, training and preprocessing configuration,
// normalization stats, residual tail, threshold, seed and a tensor index
// with shapes and byte offsets into the blob.
struct ModelBundle {
  int format_version = kBundleFormatVersion;
  TrainedUser user;  // model, stats, tail, threshold and residual origin
  TrainConfig train;
  PreprocessConfig preprocess;
};

ModelBundle make_bundle(TrainedUser user, const EvaluationConfig& config);

std::string serialize_bundle(const ModelBundle& bundle);
// Throws IoError on a bad magic, a truncated or oversized blob, a tensor
// index that does not match the network, or another format version.
ModelBundle parse_bundle(std::string_view bytes);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace raoc
