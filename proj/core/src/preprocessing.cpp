#include "raoc/preprocessing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "raoc/errors.hpp"

namespace raoc {

std::string_view sensor_tag(Sensor sensor) {
  switch (sensor) {
    case Sensor::kAccelerometer:
      return "acc";
    case Sensor::kGyroscope:
      return "gyr";
    case Sensor::kMagnetometer:
      return "mag";
  }
  return "?";
}

bool parse_sensor_tag(std::string_view tag, Sensor& out) {
  for (int s = 0; s < kSensorCount; ++s) {
    if (tag == sensor_tag(static_cast<Sensor>(s))) {
      out = static_cast<Sensor>(s);
      return true;
    }
  }
  return false;
}

bool SensorRecording::usable() const {
  return std::all_of(streams.begin(), streams.end(),
                     [](const SensorStream& s) { return s.size() >= 2; });
}

void SensorRecording::validate() const {
  for (int s = 0; s < kSensorCount; ++s) {
    const SensorStream& stream = streams[s];
    for (std::size_t i = 0; i < stream.size(); ++i) {
      const SensorSample& p = stream[i];
      if (!std::isfinite(p.timestamp_ms) || !std::isfinite(p.x) || !std::isfinite(p.y) ||
          !std::isfinite(p.z)) {
        throw DataError("session " + user_id + "/" + session_id + ": non-finite " +
                        std::string(sensor_tag(static_cast<Sensor>(s))) + " sample at index " +
                        std::to_string(i));
      }
      if (i > 0 && !(p.timestamp_ms > stream[i - 1].timestamp_ms)) {
        throw DataError("session " + user_id + "/" + session_id + ": " +
                        std::string(sensor_tag(static_cast<Sensor>(s))) +
                        " timestamps not strictly increasing at index " + std::to_string(i));
      }
    }
  }
}

void PreprocessConfig::validate() const {
  if (!(peak_mad_k > 0.0)) throw ConfigError("peak_mad_k must be > 0");
  if (median_window < 1 || median_window % 2 == 0) {
    throw ConfigError("median_window must be odd and >= 1");
  }
  if (!(flat_window_s > 0.0)) throw ConfigError("flat_window_s must be > 0");
  if (!(flat_var_eps >= 0.0)) throw ConfigError("flat_var_eps must be >= 0");
  if (!(rate_hz > 0.0)) throw ConfigError("rate_hz must be > 0");
  if (window_length() < 8) {
    throw ConfigError("window of " + std::to_string(window_s) + " s yields " +
                      std::to_string(window_length()) + " samples; at least 8 are required");
  }
}

int PreprocessConfig::window_length() const {
  return static_cast<int>(std::lround(window_s * rate_hz));
}

// --- Noise removal ----------------------------------------------------------

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double& axis(SensorSample& s, int a) { return a == 0 ? s.x : (a == 1 ? s.y : s.z); }
double axis(const SensorSample& s, int a) { return a == 0 ? s.x : (a == 1 ? s.y : s.z); }

void repair_axis(SensorStream& out, const SensorStream& in, int a, const PreprocessConfig& cfg) {
  const std::size_t n = in.size();
  if (n < 2) return;
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = axis(in[i], a);
  const double center = median_of(values);
  std::vector<double> deviation(n);
  for (std::size_t i = 0; i < n; ++i) deviation[i] = std::abs(values[i] - center);
  const double limit = cfg.peak_mad_k * median_of(deviation);

  const std::size_t half = static_cast<std::size_t>(cfg.median_window / 2);
  std::vector<double> neighborhood;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    neighborhood.assign(values.begin() + static_cast<std::ptrdiff_t>(lo),
                        values.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
    const double local = median_of(neighborhood);
    if (std::abs(values[i] - local) > limit) axis(out[i], a) = local;
  }
}

struct Interval {
  double begin;
  double end;
};

struct RunningVariance {
  std::array<double, kAxesPerSensor> mean{};
  std::array<double, kAxesPerSensor> m2{};
  std::size_t count = 0;

  void add(const SensorSample& s) {
    ++count;
    for (int a = 0; a < kAxesPerSensor; ++a) {
      const double v = axis(s, a);
      const double delta = v - mean[a];
      mean[a] += delta / static_cast<double>(count);
      m2[a] += delta * (v - mean[a]);
    }
  }
  bool below(double eps) const {
    for (int a = 0; a < kAxesPerSensor; ++a) {
      if (!(m2[a] / static_cast<double>(count) < eps)) return false;
    }
    return true;
  }
};

std::vector<Interval> flat_intervals(const SensorStream& stream, const PreprocessConfig& cfg) {
  const double min_span = cfg.flat_window_s * 1000.0;
  std::vector<Interval> out;
  std::size_t i = 0;
  const std::size_t n = stream.size();
  while (i < n) {
    RunningVariance acc;
    acc.add(stream[i]);
    std::size_t j = i;
    while (j + 1 < n) {
      RunningVariance next = acc;
      next.add(stream[j + 1]);
      if (!next.below(cfg.flat_var_eps)) break;
      acc = next;
      ++j;
    }
    if (stream[j].timestamp_ms - stream[i].timestamp_ms >= min_span) {
      out.push_back({stream[i].timestamp_ms, stream[j].timestamp_ms});
      i = j + 1;
    } else {
      ++i;
    }
  }
  return out;
}

std::vector<Interval> intersect(const std::vector<Interval>& a, const std::vector<Interval>& b) {
  std::vector<Interval> out;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double lo = std::max(a[i].begin, b[j].begin);
    const double hi = std::min(a[i].end, b[j].end);
    if (lo <= hi) out.push_back({lo, hi});
    if (a[i].end < b[j].end) {
      ++i;
    } else {
      ++j;
    }
  }
  return out;
}

}  // namespace

SensorRecording repair_spikes(const SensorRecording& recording, const PreprocessConfig& config) {
  config.validate();
  SensorRecording out = recording;
  for (int s = 0; s < kSensorCount; ++s) {
    for (int a = 0; a < kAxesPerSensor; ++a) {
      repair_axis(out.streams[s], recording.streams[s], a, config);
    }
  }
  return out;
}

std::vector<SensorRecording> drop_flat_segments(const SensorRecording& recording,
                                                const PreprocessConfig& config) {
  config.validate();
  std::vector<Interval> flat = flat_intervals(recording.streams[0], config);
  for (int s = 1; s < kSensorCount; ++s) flat = intersect(flat, flat_intervals(recording.streams[s], config));
  const double min_span = config.flat_window_s * 1000.0;
  std::erase_if(flat, [&](const Interval& v) { return v.end - v.begin < min_span; });
  if (flat.empty()) return {recording};

  // Pieces live strictly between consecutive flat intervals.
  std::vector<Interval> gaps;
  const double inf = std::numeric_limits<double>::infinity();
  double previous_end = -inf;
  for (const Interval& v : flat) {
    gaps.push_back({previous_end, v.begin});
    previous_end = v.end;
  }
  gaps.push_back({previous_end, inf});

  std::vector<SensorRecording> pieces;
  for (std::size_t g = 0; g < gaps.size(); ++g) {
    SensorRecording piece;
    piece.user_id = recording.user_id;
    piece.session_id = recording.session_id + "." + std::to_string(g);
    for (int s = 0; s < kSensorCount; ++s) {
      for (const SensorSample& p : recording.streams[s]) {
        if (p.timestamp_ms > gaps[g].begin && p.timestamp_ms < gaps[g].end) {
          piece.streams[s].push_back(p);
        }
      }
    }
    if (piece.usable()) pieces.push_back(std::move(piece));
  }
  return pieces;
}

std::vector<SensorRecording> remove_noise(const SensorRecording& recording,
                                          const PreprocessConfig& config) {
  return drop_flat_segments(repair_spikes(recording, config), config);
}

// --- Resampling -------------------------------------------------------------

ChannelSeries resample(const SensorRecording& recording, double rate_hz) {
  if (!(rate_hz > 0.0)) throw ConfigError("resample rate must be > 0");
  double start = -std::numeric_limits<double>::infinity();
  double end = std::numeric_limits<double>::infinity();
  for (int s = 0; s < kSensorCount; ++s) {
    const SensorStream& stream = recording.streams[s];
    if (stream.size() < 2) {
      throw DataError("session " + recording.user_id + "/" + recording.session_id + ": " +
                      std::string(sensor_tag(static_cast<Sensor>(s))) +
                      " stream has fewer than 2 samples");
    }
    std::vector<double> steps(stream.size() - 1);
    for (std::size_t i = 1; i < stream.size(); ++i) {
      steps[i - 1] = stream[i].timestamp_ms - stream[i - 1].timestamp_ms;
    }
    start = std::max(start, stream.front().timestamp_ms);
    end = std::min(end, stream.back().timestamp_ms + median_of(std::move(steps)));
  }
  if (!(end > start)) {
    throw DataError("session " + recording.user_id + "/" + recording.session_id +
                    ": sensors share no time range");
  }

  const double step_ms = 1000.0 / rate_hz;
  const auto count = static_cast<std::size_t>(std::floor((end - start) / step_ms + 1e-9));
  ChannelSeries out;
  out.user_id = recording.user_id;
  out.session_id = recording.session_id;
  out.start_ms = start;
  out.rate_hz = rate_hz;
  out.channels.assign(kRawChannels, std::vector<double>(count));
  for (int s = 0; s < kSensorCount; ++s) {
    const SensorStream& stream = recording.streams[s];
    std::size_t seg = 0;
    for (std::size_t k = 0; k < count; ++k) {
      const double t = out.time_at(k);
      while (seg + 2 < stream.size() && stream[seg + 1].timestamp_ms <= t) ++seg;
      const SensorSample& p0 = stream[seg];
      const SensorSample& p1 = stream[seg + 1];
      const double f = (t - p0.timestamp_ms) / (p1.timestamp_ms - p0.timestamp_ms);
      for (int a = 0; a < kAxesPerSensor; ++a) {
        out.channels[s * kAxesPerSensor + a][k] = (1.0 - f) * axis(p0, a) + f * axis(p1, a);
      }
    }
  }
  return out;
}

std::array<double, 4> add_magnitude(double x, double y, double z) {
  return {x, y, z, std::sqrt(x * x + y * y + z * z)};
}

ChannelSeries add_magnitude(const ChannelSeries& raw) {
  if (raw.channels.size() != static_cast<std::size_t>(kRawChannels)) {
    throw ConfigError("add_magnitude expects " + std::to_string(kRawChannels) + " channels, got " +
                      std::to_string(raw.channels.size()));
  }
  ChannelSeries out = raw;
  out.channels.assign(kWindowChannels, std::vector<double>(raw.length()));
  for (int s = 0; s < kSensorCount; ++s) {
    for (std::size_t i = 0; i < raw.length(); ++i) {
      const auto v = add_magnitude(raw.channels[s * 3][i], raw.channels[s * 3 + 1][i],
                                   raw.channels[s * 3 + 2][i]);
      for (int c = 0; c < 4; ++c) out.channels[s * 4 + c][i] = v[c];
    }
  }
  return out;
}

// --- Normalization ----------------------------------------------------------

bool NormalizationStats::any_degenerate() const {
  for (int c = 0; c < kWindowChannels; ++c) {
    if (degenerate(c)) return true;
  }
  return false;
}

void NormalizationStats::validate() const {
  for (int c = 0; c < kWindowChannels; ++c) {
    if (!std::isfinite(min[c]) || !std::isfinite(max[c]) || max[c] < min[c]) {
      throw DataError("normalization channel " + std::to_string(c) + " has invalid range");
    }
  }
}

namespace {

struct RangeAccumulator {
  std::array<double, kWindowChannels> min;
  std::array<double, kWindowChannels> max;
  bool seen = false;

  RangeAccumulator() {
    min.fill(std::numeric_limits<double>::infinity());
    max.fill(-std::numeric_limits<double>::infinity());
  }
  void add(int c, double v) {
    min[c] = std::min(min[c], v);
    max[c] = std::max(max[c], v);
    seen = true;
  }
  NormalizationStats finish() const {
    if (!seen) throw DataError("cannot fit normalization on empty training data");
    NormalizationStats stats;
    stats.min = min;
    stats.max = max;
    stats.validate();
    return stats;
  }
};

double normalize(double v, double lo, double hi) {
  if (!(hi > lo)) return 0.5;
  return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
}

}  // namespace

NormalizationStats fit_normalization(std::span<const ChannelSeries> training) {
  RangeAccumulator acc;
  for (const ChannelSeries& series : training) {
    if (series.channels.size() != static_cast<std::size_t>(kWindowChannels)) {
      throw ConfigError("normalization expects " + std::to_string(kWindowChannels) + " channels");
    }
    for (int c = 0; c < kWindowChannels; ++c) {
      for (double v : series.channels[c]) acc.add(c, v);
    }
  }
  return acc.finish();
}

NormalizationStats fit_normalization(std::span<const SensorWindow> training) {
  RangeAccumulator acc;
  for (const SensorWindow& w : training) {
    for (int c = 0; c < kWindowChannels; ++c) {
      for (int t = 0; t < w.length; ++t) acc.add(c, w.at(c, t));
    }
  }
  return acc.finish();
}

ChannelSeries apply_normalization(const ChannelSeries& series, const NormalizationStats& stats) {
  if (series.channels.size() != static_cast<std::size_t>(kWindowChannels)) {
    throw ConfigError("normalization expects " + std::to_string(kWindowChannels) + " channels");
  }
  ChannelSeries out = series;
  for (int c = 0; c < kWindowChannels; ++c) {
    for (double& v : out.channels[c]) v = normalize(v, stats.min[c], stats.max[c]);
  }
  return out;
}

SensorWindow apply_normalization(const SensorWindow& window, const NormalizationStats& stats) {
  SensorWindow out = window;
  for (int c = 0; c < kWindowChannels; ++c) {
    for (int t = 0; t < out.length; ++t) {
      out.at(c, t) = normalize(out.at(c, t), stats.min[c], stats.max[c]);
    }
  }
  return out;
}

std::vector<SensorWindow> apply_normalization(std::span<const SensorWindow> windows,
                                              const NormalizationStats& stats) {
  std::vector<SensorWindow> out;
  out.reserve(windows.size());
  for (const SensorWindow& w : windows) out.push_back(apply_normalization(w, stats));
  return out;
}

// --- Windowing --------------------------------------------------------------

Windowing window(const ChannelSeries& series, int length) {
  if (length < 1) throw ConfigError("window length must be >= 1");
  if (series.channels.size() != static_cast<std::size_t>(kWindowChannels)) {
    throw ConfigError("windowing expects " + std::to_string(kWindowChannels) + " channels, got " +
                      std::to_string(series.channels.size()));
  }
  Windowing out;
  const std::size_t total = series.length();
  const std::size_t count = total / static_cast<std::size_t>(length);
  out.dropped = total - count * static_cast<std::size_t>(length);
  out.too_short = count == 0;
  out.windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    SensorWindow win;
    win.user_id = series.user_id;
    win.session_id = series.session_id;
    const std::size_t offset = w * static_cast<std::size_t>(length);
    win.start_ms = series.time_at(offset);
    win.length = length;
    win.values.resize(static_cast<std::size_t>(kWindowChannels) * length);
    for (int c = 0; c < kWindowChannels; ++c) {
      std::copy_n(series.channels[c].begin() + static_cast<std::ptrdiff_t>(offset), length,
                  win.values.begin() + static_cast<std::ptrdiff_t>(c) * length);
    }
    out.windows.push_back(std::move(win));
  }
  return out;
}

Windowing window(const ChannelSeries& series, double seconds) {
  return window(series, static_cast<int>(std::lround(seconds * series.rate_hz)));
}

RawWindows extract_windows(std::span<const SensorRecording> recordings,
                           const PreprocessConfig& config) {
  config.validate();
  RawWindows out;
  for (const SensorRecording& recording : recordings) {
    if (!recording.usable()) {
      ++out.skipped_sessions;
      continue;
    }
    recording.validate();
    for (const SensorRecording& piece : remove_noise(recording, config)) {
      ChannelSeries series;
      try {
        series = add_magnitude(resample(piece, config.rate_hz));
      } catch (const DataError&) {
        ++out.skipped_sessions;
        continue;
      }
      Windowing w = window(series, config.window_length());
      for (SensorWindow& win : w.windows) out.windows.push_back(std::move(win));
    }
  }
  return out;
}

Tensor<float> stack_windows(std::span<const SensorWindow* const> windows) {
  if (windows.empty()) throw DataError("cannot batch an empty window collection");
  const int length = windows.front()->length;
  Tensor<float> out({static_cast<int>(windows.size()), 1, kWindowChannels, length});
  const std::size_t per = static_cast<std::size_t>(kWindowChannels) * length;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const SensorWindow& w = *windows[i];
    if (w.length != length || w.values.size() != per) {
      throw ConfigError("windows in one batch must share a shape");
    }
    float* dst = out.slice(static_cast<int>(i));
    for (std::size_t j = 0; j < per; ++j) dst[j] = static_cast<float>(w.values[j]);
  }
  return out;
}

Tensor<float> stack_windows(std::span<const SensorWindow> windows) {
  std::vector<const SensorWindow*> ptrs;
  ptrs.reserve(windows.size());
  for (const SensorWindow& w : windows) ptrs.push_back(&w);
  return stack_windows(std::span<const SensorWindow* const>(ptrs));
}

}  // namespace raoc
