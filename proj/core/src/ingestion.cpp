#include "raoc/ingestion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "raoc/errors.hpp"

namespace raoc {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string format_number(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw DataError("cannot format number");
  return std::string(buf, end);
}

bool parse_number(std::string_view text, double& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size() && std::isfinite(out);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Sorts by timestamp; of equal timestamps the row read last survives.
std::size_t finalize_stream(SensorStream& stream) {
  std::stable_sort(stream.begin(), stream.end(),
                   [](const SensorSample& a, const SensorSample& b) {
                     return a.timestamp_ms < b.timestamp_ms;
                   });
  std::size_t duplicates = 0;
  SensorStream out;
  out.reserve(stream.size());
  for (const SensorSample& s : stream) {
    if (!out.empty() && out.back().timestamp_ms == s.timestamp_ms) {
      out.back() = s;
      ++duplicates;
    } else {
      out.push_back(s);
    }
  }
  stream = std::move(out);
  return duplicates;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return in;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

// --- Synthetic --------------------------------------------------------------

void SyntheticUserSpec::validate() const {
  if (!(rate_hz > 0.0)) throw ConfigError("synthetic rate must be > 0");
  if (!(duration_s > 0.0)) throw ConfigError("synthetic duration must be > 0");
  if (!(noise_std >= 0.0)) throw ConfigError("synthetic noise_std must be >= 0");
  for (const auto& bank : channels) {
    for (const Sinusoid& s : bank) {
      if (!(s.frequency_hz > 0.0) || !(s.frequency_hz < rate_hz / 2.0)) {
        throw ConfigError("synthetic frequency " + format_number(s.frequency_hz) +
                          " Hz is outside (0, rate/2)");
      }
    }
  }
}

SensorRecording generate_synthetic(const SyntheticUserSpec& spec, int session_index,
                                   const std::string& session_id) {
  spec.validate();
  SensorRecording rec;
  rec.user_id = spec.user_id;
  rec.session_id = session_id;
  const auto count = static_cast<std::size_t>(std::floor(spec.duration_s * spec.rate_hz + 1e-9));
  std::mt19937_64 rng(splitmix64(spec.seed ^ splitmix64(static_cast<std::uint64_t>(session_index) + 1)));
  std::normal_distribution<double> noise(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int s = 0; s < kSensorCount; ++s) rec.streams[s].resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) / spec.rate_hz;
    for (int s = 0; s < kSensorCount; ++s) {
      SensorSample& sample = rec.streams[s][k];
      sample.timestamp_ms = 1000.0 * t;
      std::array<double, 3> v{};
      for (int a = 0; a < 3; ++a) {
        const int c = s * 3 + a;
        double value = spec.offsets[c];
        for (const Sinusoid& w : spec.channels[c]) {
          value += w.amplitude * std::sin(two_pi * w.frequency_hz * t + w.phase);
        }
        if (spec.noise_std > 0.0) value += spec.noise_std * noise(rng);
        v[a] = value;
      }
      sample.x = v[0];
      sample.y = v[1];
      sample.z = v[2];
    }
  }
  return rec;
}

void SyntheticFamilySpec::validate() const {
  if (family != "bands" && family != "attacker") {
    throw ConfigError("unknown synthetic family '" + family + "' (expected bands or attacker)");
  }
  if (users < 1 || sessions < 1 || sinusoids_per_channel < 1) {
    throw ConfigError("synthetic family needs users, sessions and sinusoids >= 1");
  }
  if (!(duration_s > 0.0) || !(rate_hz > 0.0) || !(noise_std >= 0.0)) {
    throw ConfigError("synthetic family needs positive duration and rate and noise_std >= 0");
  }
  const double top = family == "bands" ? 3.0 + 3.0 * (users - 1) : 20.0;
  if (!(top < rate_hz / 2.0)) {
    throw ConfigError("synthetic family frequencies reach " + format_number(top) +
                      " Hz, above half the sample rate");
  }
}

std::vector<SyntheticUserSpec> make_family(const SyntheticFamilySpec& spec) {
  spec.validate();
  // Gravity on acc z and a fixed geomagnetic field, shared by every user.
  constexpr std::array<double, kRawChannels> kOffsets{0.0, 0.0, 9.81, 0.0, 0.0,
                                                      0.0, 20.0, -10.0, 40.0};
  const bool attacker = spec.family == "attacker";
  std::vector<SyntheticUserSpec> out;
  for (int u = 0; u < spec.users; ++u) {
    std::mt19937_64 rng(splitmix64(spec.seed * 1000003ULL + static_cast<std::uint64_t>(u)));
    const double lo = attacker ? 4.0 : 1.0 + 3.0 * u;
    const double hi = attacker ? 20.0 : 3.0 + 3.0 * u;
    std::uniform_real_distribution<double> freq(lo, hi);
    std::uniform_real_distribution<double> amp(attacker ? 0.3 : 0.5, attacker ? 2.0 : 1.5);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    SyntheticUserSpec user;
    user.user_id = spec.user_prefix + std::to_string(u);
    user.seed = splitmix64(spec.seed ^ (0xabcdef12345ULL + static_cast<std::uint64_t>(u)));
    user.offsets = kOffsets;
    user.noise_std = spec.noise_std;
    user.rate_hz = spec.rate_hz;
    user.duration_s = spec.duration_s;
    for (auto& bank : user.channels) {
      for (int i = 0; i < spec.sinusoids_per_channel; ++i) {
        Sinusoid s;
        s.frequency_hz = freq(rng);
        s.amplitude = amp(rng);
        s.phase = phase(rng);
        bank.push_back(s);
      }
    }
    out.push_back(std::move(user));
  }
  return out;
}

std::vector<UserRecordings> generate_family(const SyntheticFamilySpec& spec) {
  std::vector<UserRecordings> out;
  for (const SyntheticUserSpec& user : make_family(spec)) {
    UserRecordings entry{user.user_id, {}};
    for (int s = 0; s < spec.sessions; ++s) {
      entry.recordings.push_back(generate_synthetic(user, s, "s" + std::to_string(s)));
    }
    out.push_back(std::move(entry));
  }
  return out;
}

// --- Generic CSV ------------------------------------------------------------

namespace {

constexpr std::array<const char*, 7> kCsvColumns{"user_id", "session_id", "sensor",
                                                 "timestamp_ms", "x", "y", "z"};

}  // namespace

CsvLoad parse_generic_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) {
    throw DataError(source + ": line 1: missing header (column 'user_id' not found)");
  }
  std::map<std::string, std::size_t> index;
  const auto header = split(line, ',');
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name(trim(header[i]));
    if (std::find_if(kCsvColumns.begin(), kCsvColumns.end(),
                     [&](const char* c) { return name == c; }) == kCsvColumns.end()) {
      throw DataError(source + ": line 1: unexpected column '" + name + "'");
    }
    index[name] = i;
  }
  for (const char* column : kCsvColumns) {
    if (!index.contains(column)) {
      throw DataError(source + ": line 1: missing column '" + std::string(column) + "'");
    }
  }

  CsvLoad out;
  std::map<std::pair<std::string, std::string>, SensorRecording> groups;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != header.size()) {
      throw DataError(source + ": line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    Sensor sensor;
    if (!parse_sensor_tag(trim(fields[index["sensor"]]), sensor)) {
      ++out.rejected_rows;
      continue;
    }
    SensorSample sample;
    const std::array<std::pair<const char*, double*>, 4> numeric{{{"timestamp_ms", &sample.timestamp_ms},
                                                                   {"x", &sample.x},
                                                                   {"y", &sample.y},
                                                                   {"z", &sample.z}}};
    for (const auto& [column, target] : numeric) {
      if (!parse_number(fields[index[column]], *target)) {
        throw DataError(source + ": line " + std::to_string(line_no) + ": column '" + column +
                        "' is not a finite number");
      }
    }
    const std::string user(trim(fields[index["user_id"]]));
    const std::string session(trim(fields[index["session_id"]]));
    SensorRecording& rec = groups[{user, session}];
    rec.user_id = user;
    rec.session_id = session;
    rec.stream(sensor).push_back(sample);
  }
  for (auto& [key, rec] : groups) {
    for (SensorStream& stream : rec.streams) out.duplicate_rows += finalize_stream(stream);
    out.recordings.push_back(std::move(rec));
  }
  return out;
}

CsvLoad load_generic_csv(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  return parse_generic_csv(in, path.string());
}

void write_generic_csv(std::ostream& out, std::span<const SensorRecording> recordings) {
  out << "user_id,session_id,sensor,timestamp_ms,x,y,z\n";
  std::string row;
  for (const SensorRecording& rec : recordings) {
    for (int s = 0; s < kSensorCount; ++s) {
      const std::string prefix =
          rec.user_id + "," + rec.session_id + "," + std::string(sensor_tag(static_cast<Sensor>(s))) + ",";
      for (const SensorSample& p : rec.streams[s]) {
        row = prefix;
        row += format_number(p.timestamp_ms);
        row += ',';
        row += format_number(p.x);
        row += ',';
        row += format_number(p.y);
        row += ',';
        row += format_number(p.z);
        row += '\n';
        out << row;
      }
    }
  }
}

void write_generic_csv(const std::filesystem::path& path,
                       std::span<const SensorRecording> recordings) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  write_generic_csv(out, recordings);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// --- Manifest ---------------------------------------------------------------

namespace {

constexpr std::array<std::pair<DatasetSchema, const char*>, 5> kSchemaNames{{
    {DatasetSchema::kGeneric, "generic"},
    {DatasetSchema::kHmog, "hmog"},
    {DatasetSchema::kBrainRun, "brainrun"},
    {DatasetSchema::kIdNet, "idnet"},
    {DatasetSchema::kSynthetic, "synthetic"},
}};

void reject_unknown_keys(const json& object, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (const auto& [key, value] : object.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) ==
        allowed.end()) {
      throw DataError(where + ": unknown key '" + key + "'");
    }
  }
}

json spec_to_json(const SyntheticUserSpec& spec) {
  json channels = json::array();
  for (const auto& bank : spec.channels) {
    json b = json::array();
    for (const Sinusoid& s : bank) {
      b.push_back({{"frequency_hz", s.frequency_hz}, {"amplitude", s.amplitude}, {"phase", s.phase}});
    }
    channels.push_back(std::move(b));
  }
  return {{"user_id", spec.user_id},       {"seed", spec.seed},
          {"channels", std::move(channels)}, {"offsets", spec.offsets},
          {"noise_std", spec.noise_std},   {"rate_hz", spec.rate_hz},
          {"duration_s", spec.duration_s}};
}

SyntheticUserSpec spec_from_json(const json& j, const std::string& where) {
  reject_unknown_keys(j, {"user_id", "seed", "channels", "offsets", "noise_std", "rate_hz", "duration_s"},
                      where);
  SyntheticUserSpec spec;
  spec.user_id = j.value("user_id", spec.user_id);
  spec.seed = j.value("seed", spec.seed);
  spec.noise_std = j.value("noise_std", spec.noise_std);
  spec.rate_hz = j.value("rate_hz", spec.rate_hz);
  spec.duration_s = j.value("duration_s", spec.duration_s);
  if (j.contains("offsets")) spec.offsets = j.at("offsets").get<std::array<double, kRawChannels>>();
  if (j.contains("channels")) {
    const json& channels = j.at("channels");
    if (!channels.is_array() || channels.size() != static_cast<std::size_t>(kRawChannels)) {
      throw DataError(where + ": 'channels' must list " + std::to_string(kRawChannels) + " banks");
    }
    for (int c = 0; c < kRawChannels; ++c) {
      for (const json& s : channels[c]) {
        reject_unknown_keys(s, {"frequency_hz", "amplitude", "phase"}, where);
        spec.channels[c].push_back({s.value("frequency_hz", 1.0), s.value("amplitude", 1.0),
                                    s.value("phase", 0.0)});
      }
    }
  }
  return spec;
}

}  // namespace

std::string to_string(DatasetSchema schema) {
  for (const auto& [s, name] : kSchemaNames) {
    if (s == schema) return name;
  }
  return "unknown";
}

DatasetSchema dataset_schema_from_string(const std::string& name) {
  for (const auto& [s, n] : kSchemaNames) {
    if (name == n) return s;
  }
  throw DataError("unsupported dataset schema '" + name + "'");
}

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const ManifestUser& u : users) {
    if (u.id.empty()) throw DataError("manifest user with empty id");
    if (!ids.insert(u.id).second) throw DataError("manifest lists user '" + u.id + "' twice");
    if (schema == DatasetSchema::kSynthetic && !u.synthetic) {
      throw DataError("synthetic manifest user '" + u.id + "' has no spec");
    }
  }
}

const ManifestUser* DatasetManifest::find_user(const std::string& id) const {
  for (const ManifestUser& u : users) {
    if (u.id == id) return &u;
  }
  return nullptr;
}

DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    reject_unknown_keys(j, {"schema", "root", "users", "select"}, "manifest");
    DatasetManifest m;
    m.schema = dataset_schema_from_string(j.at("schema").get<std::string>());
    const std::filesystem::path root = j.value("root", std::string("."));
    m.root = root.is_absolute() ? root : base_dir / root;
    for (const json& u : j.at("users")) {
      reject_unknown_keys(u, {"id", "sessions", "spec"}, "manifest user");
      ManifestUser user;
      user.id = u.at("id").get<std::string>();
      user.sessions = u.value("sessions", std::vector<std::string>{});
      if (u.contains("spec")) user.synthetic = spec_from_json(u.at("spec"), "user '" + user.id + "' spec");
      m.users.push_back(std::move(user));
    }
    if (j.contains("select")) {
      reject_unknown_keys(j.at("select"), {"count", "seed"}, "manifest select");
      m.select = UserSelection{j.at("select").at("count").get<std::size_t>(),
                               j.at("select").value("seed", std::uint64_t{0})};
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.parent_path().empty() ? "." : path.parent_path());
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["schema"] = to_string(m.schema);
  j["root"] = m.root.generic_string();
  j["users"] = json::array();
  for (const ManifestUser& u : m.users) {
    json entry{{"id", u.id}, {"sessions", u.sessions}};
    if (u.synthetic) entry["spec"] = spec_to_json(*u.synthetic);
    j["users"].push_back(std::move(entry));
  }
  if (m.select) j["select"] = {{"count", m.select->count}, {"seed", m.select->seed}};
  return j.dump(2) + "\n";
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << manifest_to_json(manifest);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// --- Adapters ---------------------------------------------------------------

namespace {

struct Columns {
  char separator;
  int skip_lines;
  std::size_t timestamp;
  std::size_t x;
  double timestamp_scale;  // multiplier to milliseconds
};

SensorStream read_delimited(const std::filesystem::path& path, const Columns& cols) {
  std::ifstream in = open_input(path);
  SensorStream stream;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (static_cast<int>(line_no) <= cols.skip_lines || trim(line).empty()) continue;
    const auto fields = split(line, cols.separator);
    if (fields.size() < std::max(cols.timestamp, cols.x + 2) + 1) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": too few fields");
    }
    SensorSample s;
    double ts = 0.0;
    if (!parse_number(fields[cols.timestamp], ts) || !parse_number(fields[cols.x], s.x) ||
        !parse_number(fields[cols.x + 1], s.y) || !parse_number(fields[cols.x + 2], s.z)) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": unparsable number");
    }
    s.timestamp_ms = ts * cols.timestamp_scale;
    stream.push_back(s);
  }
  return stream;
}

std::filesystem::path require_exists(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw IoError("referenced file '" + p.string() + "' does not exist");
  return p;
}

std::filesystem::path find_by_fragment(const std::filesystem::path& dir, const std::string& fragment) {
  require_exists(dir);
  std::vector<std::filesystem::path> matches;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.find(fragment) != std::string::npos &&
        entry.path().extension() == ".log") {
      matches.push_back(entry.path());
    }
  }
  if (matches.empty()) throw IoError("no *" + fragment + "*.log file in '" + dir.string() + "'");
  std::sort(matches.begin(), matches.end());
  return matches.front();
}

SensorRecording load_hmog_session(const std::filesystem::path& dir, const std::string& user) {
  const Columns cols{',', 0, 0, 3, 1.0};
  SensorRecording rec;
  rec.user_id = user;
  rec.session_id = dir.filename().string();
  rec.stream(Sensor::kAccelerometer) = read_delimited(require_exists(dir / "Accelerometer.csv"), cols);
  rec.stream(Sensor::kGyroscope) = read_delimited(require_exists(dir / "Gyroscope.csv"), cols);
  rec.stream(Sensor::kMagnetometer) = read_delimited(require_exists(dir / "Magnetometer.csv"), cols);
  return rec;
}

SensorRecording load_idnet_session(const std::filesystem::path& dir, const std::string& user) {
  const Columns cols{'\t', 1, 0, 1, 1e-6};
  SensorRecording rec;
  rec.user_id = user;
  rec.session_id = dir.filename().string();
  rec.stream(Sensor::kAccelerometer) = read_delimited(find_by_fragment(dir, "accelerometer"), cols);
  rec.stream(Sensor::kGyroscope) = read_delimited(find_by_fragment(dir, "gyroscope"), cols);
  rec.stream(Sensor::kMagnetometer) = read_delimited(find_by_fragment(dir, "magnetometer"), cols);
  return rec;
}

SensorRecording load_brainrun_session(const std::filesystem::path& file, const std::string& user) {
  json doc;
  try {
    doc = json::parse(read_file(require_exists(file)));
  } catch (const json::parse_error& e) {
    throw DataError(file.string() + ": not valid JSON: " + e.what());
  }
  SensorRecording rec;
  rec.user_id = user;
  rec.session_id = file.stem().string();
  const std::array<std::pair<Sensor, const char*>, 3> keys{
      {{Sensor::kAccelerometer, "accelerometer"},
       {Sensor::kGyroscope, "gyroscope"},
       {Sensor::kMagnetometer, "magnetometer"}}};
  try {
    for (const auto& [sensor, key] : keys) {
      if (!doc.contains(key)) continue;
      for (const json& e : doc.at(key)) {
        rec.stream(sensor).push_back({e.at("timestamp").get<double>(), e.at("x").get<double>(),
                                      e.at("y").get<double>(), e.at("z").get<double>()});
      }
    }
  } catch (const json::exception& e) {
    throw DataError(file.string() + ": malformed sensor entry: " + e.what());
  }
  return rec;
}

}  // namespace

const UserRecordings* LoadedDataset::find_user(const std::string& id) const {
  for (const UserRecordings& u : users) {
    if (u.user_id == id) return &u;
  }
  return nullptr;
}

std::size_t LoadedDataset::recording_count() const {
  std::size_t n = 0;
  for (const UserRecordings& u : users) n += u.recordings.size();
  return n;
}

std::vector<std::string> select_users(std::vector<std::string> ids, std::size_t count,
                                      std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  if (count < ids.size()) ids.resize(count);
  return ids;
}

LoadedDataset load_dataset(const DatasetManifest& manifest, const std::string& only_user) {
  manifest.validate();
  std::vector<const ManifestUser*> users;
  for (const ManifestUser& u : manifest.users) users.push_back(&u);
  if (manifest.select) {
    std::vector<std::string> ids;
    for (const ManifestUser* u : users) ids.push_back(u->id);
    const std::vector<std::string> chosen = select_users(ids, manifest.select->count, manifest.select->seed);
    std::erase_if(users, [&](const ManifestUser* u) {
      return std::find(chosen.begin(), chosen.end(), u->id) == chosen.end();
    });
  }
  if (!only_user.empty()) {
    std::erase_if(users, [&](const ManifestUser* u) { return u->id != only_user; });
    if (users.empty()) throw DataError("user '" + only_user + "' is not in the manifest");
  }

  LoadedDataset out;
  for (const ManifestUser* user : users) {
    UserRecordings entry{user->id, {}};
    for (std::size_t i = 0; i < user->sessions.size(); ++i) {
      const std::string& session = user->sessions[i];
      const std::filesystem::path path = manifest.root / session;
      switch (manifest.schema) {
        case DatasetSchema::kGeneric: {
          CsvLoad load = load_generic_csv(require_exists(path));
          out.rejected_rows += load.rejected_rows;
          out.duplicate_rows += load.duplicate_rows;
          for (SensorRecording& rec : load.recordings) {
            if (rec.user_id == user->id) entry.recordings.push_back(std::move(rec));
          }
          break;
        }
        case DatasetSchema::kHmog:
          entry.recordings.push_back(load_hmog_session(path, user->id));
          break;
        case DatasetSchema::kBrainRun:
          entry.recordings.push_back(load_brainrun_session(path, user->id));
          break;
        case DatasetSchema::kIdNet:
          entry.recordings.push_back(load_idnet_session(path, user->id));
          break;
        case DatasetSchema::kSynthetic:
          entry.recordings.push_back(
              generate_synthetic(*user->synthetic, static_cast<int>(i), session));
          entry.recordings.back().user_id = user->id;
          break;
      }
    }
    for (SensorRecording& rec : entry.recordings) {
      for (SensorStream& stream : rec.streams) out.duplicate_rows += finalize_stream(stream);
    }
    const auto before = entry.recordings.size();
    std::erase_if(entry.recordings, [](const SensorRecording& r) { return !r.usable(); });
    out.excluded_sessions += before - entry.recordings.size();
    std::sort(entry.recordings.begin(), entry.recordings.end(),
              [](const SensorRecording& a, const SensorRecording& b) { return a.session_id < b.session_id; });
    out.users.push_back(std::move(entry));
  }
  std::sort(out.users.begin(), out.users.end(),
            [](const UserRecordings& a, const UserRecordings& b) { return a.user_id < b.user_id; });
  return out;
}

LoadedDataset load_dataset(const DatasetManifest& manifest) { return load_dataset(manifest, {}); }

DatasetManifest write_generic_dataset(const std::filesystem::path& dir,
                                      std::span<const UserRecordings> users) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  DatasetManifest manifest;
  manifest.schema = DatasetSchema::kGeneric;
  manifest.root = ".";
  for (const UserRecordings& user : users) {
    std::filesystem::create_directories(dir / user.user_id, ec);
    if (ec) throw IoError("cannot create '" + (dir / user.user_id).string() + "': " + ec.message());
    ManifestUser entry;
    entry.id = user.user_id;
    for (const SensorRecording& rec : user.recordings) {
      const std::string relative = user.user_id + "/" + rec.session_id + ".csv";
      write_generic_csv(dir / relative, std::span<const SensorRecording>(&rec, 1));
      entry.sessions.push_back(relative);
    }
    manifest.users.push_back(std::move(entry));
  }
  save_manifest(manifest, dir / "manifest.json");
  return manifest;
}

}  // namespace raoc
