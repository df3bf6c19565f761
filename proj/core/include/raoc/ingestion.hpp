#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "raoc/preprocessing.hpp"

namespace raoc {

struct Sinusoid {
  double frequency_hz = 1.0;
  double amplitude = 1.0;
  double phase = 0.0;

  bool operator==(const Sinusoid&) const = default;
};

// Raw channels are ordered acc x,y,z; gyr x,y,z; mag x,y,z.
struct SyntheticUserSpec {
  std::string user_id = "user0";
  std::uint64_t seed = 0;
  std::array<std::vector<Sinusoid>, kRawChannels> channels;
  std::array<double, kRawChannels> offsets{};
  double noise_std = 0.1;
  double rate_hz = 100.0;
  double duration_s = 10.0;

  void validate() const;
  bool operator==(const SyntheticUserSpec&) const = default;
};

// Samples t_k = k / rate for duration * rate samples on every sensor. The
// noise stream is seeded from the spec seed and the session index.
SensorRecording generate_synthetic(const SyntheticUserSpec& spec, int session_index = 0,
                                   const std::string& session_id = "s0");

// A family of users whose specs are drawn from one seed.
//   bands:    user u draws every frequency from [1 + 3u, 3 + 3u] Hz, so bands
//             of different users are disjoint.
//   attacker: frequencies drawn from [4, 20] Hz with wider amplitudes.
struct SyntheticFamilySpec {
  std::string family = "bands";
  int users = 6;
  int sessions = 2;
  int sinusoids_per_channel = 2;
  double duration_s = 200.0;
  double rate_hz = 100.0;
  double noise_std = 0.1;
  std::uint64_t seed = 7;
  std::string user_prefix = "user";

  void validate() const;
  bool operator==(const SyntheticFamilySpec&) const = default;
};

std::vector<SyntheticUserSpec> make_family(const SyntheticFamilySpec& spec);

struct UserRecordings {
  std::string user_id;
  std::vector<SensorRecording> recordings;
};

std::vector<UserRecordings> generate_family(const SyntheticFamilySpec& spec);

// --- Generic CSV ------------------------------------------------------------

struct CsvLoad {
  std::vector<SensorRecording> recordings;
  std::size_t rejected_rows = 0;   // unknown sensor tag
  std::size_t duplicate_rows = 0;  // repeated timestamp within a stream; last row kept
};

// Header must hold exactly user_id, session_id, sensor, timestamp_ms, x, y, z
// in any order. Recordings are sorted by (user_id, session_id).
CsvLoad load_generic_csv(const std::filesystem::path& path);
CsvLoad parse_generic_csv(std::istream& in, const std::string& source_name = "<stream>");

// Writes a header then every sample, streams in sensor order. Numbers use the
// shortest round-trip representation, so reloading is lossless.
void write_generic_csv(std::ostream& out, std::span<const SensorRecording> recordings);
void write_generic_csv(const std::filesystem::path& path,
                       std::span<const SensorRecording> recordings);

// --- Manifest ---------------------------------------------------------------

enum class DatasetSchema { kGeneric, kHmog, kBrainRun, kIdNet, kSynthetic };

std::string to_string(DatasetSchema schema);
DatasetSchema dataset_schema_from_string(const std::string& name);

struct ManifestUser {
  std::string id;
  // File or directory references relative to the root; session names for
  // the synthetic schema.
  std::vector<std::string> sessions;
  std::optional<SyntheticUserSpec> synthetic;
};

struct UserSelection {
  std::size_t count = 0;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  DatasetSchema schema = DatasetSchema::kGeneric;
  std::filesystem::path root = ".";
  std::vector<ManifestUser> users;
  std::optional<UserSelection> select;

  void validate() const;
  const ManifestUser* find_user(const std::string& id) const;
};

// A relative root is resolved against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(const std::string& json_text,
                               const std::filesystem::path& base_dir = ".");
std::string manifest_to_json(const DatasetManifest& manifest);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct LoadedDataset {
  std::vector<UserRecordings> users;
  std::size_t rejected_rows = 0;
  std::size_t duplicate_rows = 0;
  std::size_t excluded_sessions = 0;  // sessions missing a sensor

  const UserRecordings* find_user(const std::string& id) const;
  std::size_t recording_count() const;
};

// Column mappings per schema:
//   generic   each session is a generic CSV; rows of other users are ignored.
//   hmog      each session is a directory holding Accelerometer.csv,
//             Gyroscope.csv and Magnetometer.csv without header; columns
//             Systime(ms), EventTime, ActivityID, X, Y, Z, orientation.
//   brainrun  each session is a JSON document with "accelerometer",
//             "gyroscope" and "magnetometer" arrays of {timestamp, x, y, z}
//             with timestamps in ms.
//   idnet     each session is a directory holding *accelerometer*.log,
//             *gyroscope*.log and *magnetometer*.log; tab separated, one
//             header line, timestamp in ns followed by x, y, z.
//   synthetic each session name is generated from the user's embedded spec.
LoadedDataset load_dataset(const DatasetManifest& manifest);
LoadedDataset load_dataset(const DatasetManifest& manifest, const std::string& only_user);

// Lexicographic order, then a seeded shuffle, then the first `count` ids.
std::vector<std::string> select_users(std::vector<std::string> ids, std::size_t count,
                                      std::uint64_t seed);

// Writes one generic CSV per user session plus manifest.json under dir.
DatasetManifest write_generic_dataset(const std::filesystem::path& dir,
                                      std::span<const UserRecordings> users);

}  // namespace raoc
