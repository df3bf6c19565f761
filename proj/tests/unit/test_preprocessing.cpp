#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "../support/synthetic.hpp"
#include "raoc/errors.hpp"
#include "raoc/preprocessing.hpp"

using namespace raoc;

namespace {

// Every sensor carries the same samples, produced by value(t_ms, axis).
template <typename F>
SensorRecording uniform_recording(std::size_t count, double period_ms, F value) {
  SensorRecording r;
  r.user_id = "u";
  r.session_id = "s";
  for (SensorStream& stream : r.streams) {
    for (std::size_t i = 0; i < count; ++i) {
      const double t = static_cast<double>(i) * period_ms;
      stream.push_back({t, value(t, 0), value(t, 1), value(t, 2)});
    }
  }
  return r;
}

ChannelSeries ramp_series(std::size_t length) {
  ChannelSeries s;
  s.channels.assign(kWindowChannels, std::vector<double>(length));
  for (int c = 0; c < kWindowChannels; ++c) {
    for (std::size_t i = 0; i < length; ++i) s.channels[c][i] = c * 10000.0 + static_cast<double>(i);
  }
  return s;
}

}  // namespace

TEST_CASE("spike repair") {
  SUBCASE("single spike on a flat signal") {
    SensorRecording r = uniform_recording(50, 10.0, [](double, int) { return 0.0; });
    r.streams[0][20].x = 1000.0;
    const SensorRecording out = repair_spikes(r);
    CHECK(out.streams[0][20].x == 0.0);
    CHECK(out == uniform_recording(50, 10.0, [](double, int) { return 0.0; }));
  }
  SUBCASE("injected spikes on a sinusoid") {
    const auto wave = [](double t, int a) { return std::sin(2.0 * std::numbers::pi * 1.3 * t / 1000.0 + a); };
    const SensorRecording clean = uniform_recording(1000, 10.0, wave);
    SensorRecording spiked = clean;
    const std::size_t at[] = {100, 420, 777};
    for (std::size_t i : at) spiked.streams[1][i].y += 25.0;
    const SensorRecording out = repair_spikes(spiked);
    int changed = 0;
    for (int s = 0; s < kSensorCount; ++s) {
      for (std::size_t i = 0; i < clean.streams[s].size(); ++i) {
        if (!(out.streams[s][i] == spiked.streams[s][i])) ++changed;
      }
    }
    CHECK(changed == 3);
    // The local median is a neighbor at most two samples away, so it differs
    // from the clean value by at most two steps of the steepest slope.
    const double max_step = 2.0 * std::numbers::pi * 1.3 * 0.01;
    for (std::size_t i : at) CHECK(std::abs(out.streams[1][i].y - clean.streams[1][i].y) <= 2.0 * max_step);
  }
}

TEST_CASE("flat segments") {
  SUBCASE("a constant session disappears") {
    const SensorRecording r = uniform_recording(1000, 10.0, [](double, int a) { return 1.0 + a; });
    CHECK(drop_flat_segments(r).empty());
  }
  SUBCASE("a flat stretch splits the session") {
    // 0-3 s moving, 3-6 s constant, 6-9 s moving.
    const SensorRecording r = uniform_recording(900, 10.0, [](double t, int) {
      return t >= 3000.0 && t < 6000.0 ? 0.25 : std::sin(t / 100.0);
    });
    const std::vector<SensorRecording> pieces = drop_flat_segments(r);
    REQUIRE(pieces.size() == 2);
    CHECK(pieces[0].session_id == "s.0");
    CHECK(pieces[0].streams[0].back().timestamp_ms < 3000.0);
    CHECK(pieces[1].streams[0].front().timestamp_ms > 5990.0);
  }
  SUBCASE("short pauses are kept") {
    const SensorRecording r = uniform_recording(900, 10.0, [](double t, int) {
      return t >= 3000.0 && t < 4500.0 ? 0.25 : std::sin(t / 100.0);
    });
    const std::vector<SensorRecording> pieces = drop_flat_segments(r);
    REQUIRE(pieces.size() == 1);
    CHECK(pieces[0] == r);
  }
}

TEST_CASE("resampling") {
  SUBCASE("uniform 100 Hz input is unchanged") {
    const SensorRecording r =
        uniform_recording(300, 10.0, [](double t, int a) { return std::cos(t / 77.0 + a); });
    const ChannelSeries s = resample(r);
    REQUIRE(s.length() == 300);
    CHECK(s.start_ms == 0.0);
    for (int c = 0; c < kRawChannels; ++c) {
      for (std::size_t i = 0; i < s.length(); ++i) {
        const SensorSample& p = r.streams[c / 3][i];
        CHECK(s.channels[c][i] == (c % 3 == 0 ? p.x : (c % 3 == 1 ? p.y : p.z)));
      }
    }
  }
  SUBCASE("a linear signal stays linear") {
    const SensorRecording r = uniform_recording(100, 20.0, [](double t, int) { return t / 1000.0; });
    const ChannelSeries s = resample(r);
    CHECK(s.length() == 200);
    for (int c = 0; c < kRawChannels; ++c) {
      for (std::size_t i = 0; i < s.length(); ++i) {
        CHECK(s.channels[c][i] == doctest::Approx(s.time_at(i) / 1000.0).epsilon(1e-14));
      }
    }
  }
  SUBCASE("87 Hz sinusoid stays within the interpolation bound") {
    constexpr double rate = 87.0, f = 2.0;
    const auto wave = [&](double t, int) { return std::sin(2.0 * std::numbers::pi * f * t / 1000.0); };
    const SensorRecording r = uniform_recording(261, 1000.0 / rate, wave);
    const ChannelSeries s = resample(r);
    REQUIRE(s.length() == 300);
    const double bound = std::pow(2.0 * std::numbers::pi * f / rate, 2) / 8.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < s.length(); ++i) {
      worst = std::max(worst, std::abs(s.channels[4][i] - wave(s.time_at(i), 0)));
    }
    CHECK(worst < bound);
  }
  SUBCASE("disjoint sensors are rejected") {
    SensorRecording r = uniform_recording(10, 10.0, [](double, int) { return 0.0; });
    for (SensorSample& p : r.streams[2]) p.timestamp_ms += 10000.0;
    CHECK_THROWS_AS(resample(r), DataError);
  }
}

TEST_CASE("magnitude channels") {
  CHECK(add_magnitude(3.0, 4.0, 0.0)[3] == 5.0);
  CHECK(add_magnitude(0.0, 0.0, 0.0)[3] == 0.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng), y = u(rng), z = u(rng);
    const auto m = add_magnitude(x, y, z);
    CHECK(std::abs(m[3] * m[3] - (x * x + y * y + z * z)) < 1e-12 * (1.0 + m[3] * m[3]));
  }
}

TEST_CASE("min-max normalization") {
  ChannelSeries train = ramp_series(3);
  for (int c = 0; c < kWindowChannels; ++c) train.channels[c] = {0.0, 5.0, 10.0};
  train.channels[7] = {2.0, 2.0, 2.0};
  const std::vector<ChannelSeries> training{train};
  const NormalizationStats stats = fit_normalization(training);
  CHECK(stats.degenerate(7));
  CHECK_FALSE(stats.degenerate(0));
  const ChannelSeries out = apply_normalization(train, stats);
  CHECK(out.channels[0] == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(out.channels[7] == std::vector<double>{0.5, 0.5, 0.5});

  ChannelSeries test = train;
  test.channels[0] = {11.0, -3.0, 7.5};
  const ChannelSeries clipped = apply_normalization(test, stats);
  CHECK(clipped.channels[0] == std::vector<double>{1.0, 0.0, 0.75});
  CHECK_THROWS_AS(fit_normalization(std::vector<ChannelSeries>{}), DataError);
}

TEST_CASE("windowing") {
  SUBCASE("12.3 s gives 24 windows and drops 30 samples") {
    const Windowing w = window(ramp_series(1230), 0.5);
    CHECK(w.windows.size() == 24);
    CHECK(w.dropped == 30);
    CHECK_FALSE(w.too_short);
  }
  SUBCASE("exactly one window") {
    const Windowing w = window(ramp_series(50), 0.5);
    CHECK(w.windows.size() == 1);
    CHECK(w.dropped == 0);
  }
  SUBCASE("too short") {
    const Windowing w = window(ramp_series(49), 0.5);
    CHECK(w.windows.empty());
    CHECK(w.too_short);
  }
  SUBCASE("concatenated windows reproduce the series") {
    ChannelSeries s = ramp_series(1000);
    s.start_ms = 250.0;
    const Windowing w = window(s, 50);
    REQUIRE(w.windows.size() == 20);
    for (std::size_t k = 0; k < w.windows.size(); ++k) {
      const SensorWindow& win = w.windows[k];
      CHECK(win.length == 50);
      CHECK(win.values.size() == 600);
      CHECK(win.start_ms == 250.0 + 500.0 * static_cast<double>(k));
      for (int c = 0; c < kWindowChannels; ++c) {
        for (int t = 0; t < 50; ++t) CHECK(win.at(c, t) == s.channels[c][k * 50 + t]);
      }
    }
  }
}

TEST_CASE("pipeline output lies in the unit interval with a fixed shape") {
  const std::vector<SensorWindow> windows = raoc::testing::synthetic_user_windows(2, 30.0);
  REQUIRE(windows.size() == 60);
  for (const SensorWindow& w : windows) {
    CHECK(w.length == 50);
    REQUIRE(w.values.size() == 600);
    for (double v : w.values) CHECK((v >= 0.0 && v <= 1.0));
  }
  const Tensor<float> batch = stack_windows(windows);
  CHECK(batch.shape() == std::vector<int>{60, 1, 12, 50});
}

TEST_CASE("configuration validation") {
  PreprocessConfig c;
  CHECK(c.window_length() == 50);
  c.median_window = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PreprocessConfig{};
  c.window_s = 0.001;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
