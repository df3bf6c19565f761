#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "raoc/tensor.hpp"

namespace raoc {

enum class Sensor { kAccelerometer = 0, kGyroscope = 1, kMagnetometer = 2 };

inline constexpr int kSensorCount = 3;
inline constexpr int kAxesPerSensor = 3;
inline constexpr int kRawChannels = kSensorCount * kAxesPerSensor;
// acc x,y,z,M; gyr x,y,z,M; mag x,y,z,M
inline constexpr int kWindowChannels = kSensorCount * (kAxesPerSensor + 1);

std::string_view sensor_tag(Sensor sensor);  // "acc", "gyr", "mag"
// Returns false for an unknown tag.
bool parse_sensor_tag(std::string_view tag, Sensor& out);

struct SensorSample {
  double timestamp_ms = 0.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool operator==(const SensorSample&) const = default;
};

using SensorStream = std::vector<SensorSample>;

struct SensorRecording {
  std::string user_id;
  std::string session_id;
  std::array<SensorStream, kSensorCount> streams;

  SensorStream& stream(Sensor s) { return streams[static_cast<int>(s)]; }
  const SensorStream& stream(Sensor s) const { return streams[static_cast<int>(s)]; }
  // All three sensors carry at least two samples.
  bool usable() const;
  // Throws DataError unless timestamps strictly increase and values are finite.
  void validate() const;

  bool operator==(const SensorRecording&) const = default;
};

// Uniformly sampled multi-channel series. Carries 9 raw channels after
// resampling and 12 after magnitudes are appended.
struct ChannelSeries {
  std::string user_id;
  std::string session_id;
  double start_ms = 0.0;
  double rate_hz = 100.0;
  std::vector<std::vector<double>> channels;

  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
  double time_at(std::size_t i) const { return start_ms + 1000.0 * static_cast<double>(i) / rate_hz; }
};

// kWindowChannels x length, row-major.
struct SensorWindow {
  std::string user_id;
  std::string session_id;
  double start_ms = 0.0;
  int length = 0;
  std::vector<double> values;

  double at(int channel, int t) const {
    return values[static_cast<std::size_t>(channel) * length + t];
  }
  double& at(int channel, int t) { return values[static_cast<std::size_t>(channel) * length + t]; }
};

struct PreprocessConfig {
  double peak_mad_k = 6.0;
  int median_window = 5;
  double flat_window_s = 2.0;
  double flat_var_eps = 1e-6;
  double rate_hz = 100.0;
  double window_s = 0.5;

  void validate() const;
  int window_length() const;
  bool operator==(const PreprocessConfig&) const = default;
};

// Replaces samples that deviate from their local median by more than
// peak_mad_k times the channel's median absolute deviation.
SensorRecording repair_spikes(const SensorRecording& recording, const PreprocessConfig& config = {});

// Deletes spans of at least flat_window_s in which every axis of every sensor
// has variance below flat_var_eps. Each surviving piece becomes its own
// session; pieces too short to use are discarded.
std::vector<SensorRecording> drop_flat_segments(const SensorRecording& recording,
                                                const PreprocessConfig& config = {});

std::vector<SensorRecording> remove_noise(const SensorRecording& recording,
                                          const PreprocessConfig& config = {});

// Linear interpolation onto a uniform grid over the time range shared by all
// sensors. Each stream is taken to cover one sampling period past its last
// sample. Throws DataError when the sensors do not overlap.
ChannelSeries resample(const SensorRecording& recording, double rate_hz = 100.0);

std::array<double, 4> add_magnitude(double x, double y, double z);
ChannelSeries add_magnitude(const ChannelSeries& raw);

struct NormalizationStats {
  std::array<double, kWindowChannels> min{};
  std::array<double, kWindowChannels> max{};

  bool degenerate(int channel) const { return !(max[channel] > min[channel]); }
  bool any_degenerate() const;
  void validate() const;
  bool operator==(const NormalizationStats&) const = default;
};

NormalizationStats fit_normalization(std::span<const ChannelSeries> training);
NormalizationStats fit_normalization(std::span<const SensorWindow> training);

// Maps each channel to [0, 1] with clipping; degenerate channels become 0.5.
ChannelSeries apply_normalization(const ChannelSeries& series, const NormalizationStats& stats);
SensorWindow apply_normalization(const SensorWindow& window, const NormalizationStats& stats);
std::vector<SensorWindow> apply_normalization(std::span<const SensorWindow> windows,
                                              const NormalizationStats& stats);

struct Windowing {
  std::vector<SensorWindow> windows;
  std::size_t dropped = 0;  // trailing samples that did not fill a window
  bool too_short = false;
};

Windowing window(const ChannelSeries& series, int length);
Windowing window(const ChannelSeries& series, double seconds);

// Noise removal, resampling, magnitudes and windowing without normalization.
// Sessions the pipeline cannot use are skipped and counted.
struct RawWindows {
  std::vector<SensorWindow> windows;
  std::size_t skipped_sessions = 0;
};
RawWindows extract_windows(std::span<const SensorRecording> recordings,
                           const PreprocessConfig& config = {});

// (N, 1, kWindowChannels, length) batch for the networks.
Tensor<float> stack_windows(std::span<const SensorWindow> windows);
Tensor<float> stack_windows(std::span<const SensorWindow* const> windows);

}  // namespace raoc
