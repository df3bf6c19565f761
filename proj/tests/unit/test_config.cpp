#include <doctest.h>

#include <string>

#include "../support/temp_dir.hpp"
#include "raoc/bundle.hpp"
#include "raoc/config.hpp"

using namespace raoc;
using raoc::testing::TempDir;

namespace {

std::string error_text(const auto& call) {
  try {
    call();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

std::vector<SensorWindow> raw_user_windows(double duration_s) {
  SyntheticFamilySpec spec;
  spec.users = 1;
  spec.sessions = 1;
  spec.duration_s = duration_s;
  return extract_windows(generate_family(spec)[0].recordings).windows;
}

EvaluationConfig tiny_config() {
  EvaluationConfig c;
  c.architecture.base_channels = 8;
  c.train.batch_size = 8;
  c.train.max_steps = 5;
  return c;
}

}  // namespace

TEST_CASE("an empty object is the default configuration") {
  CHECK(parse_run_config("{}") == RunConfig{});
}

TEST_CASE("unknown keys are rejected by dotted path") {
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"learning_rate": 0.1}})"), ConfigError);
  CHECK(error_text([] { parse_run_config(R"({"train": {"learning_rate": 0.1}})"); }).find("train.learning_rate") !=
        std::string::npos);
  CHECK(error_text([] { parse_run_config(R"({"colour": 1})"); }).find("colour") != std::string::npos);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"batch_size": "many"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{"), ConfigError);
}

TEST_CASE("configuration snapshots round-trip") {
  RunConfig c = parse_run_config(R"({
    "data": "/data/m.json", "user": "u3",
    "preprocess": {"window_s": 0.75},
    "architecture": {"base_channels": 16},
    "train": {"max_steps": 1200, "noise_std": 0.05},
    "evaluation": {"origin": "origin", "folds": 5, "sweep_sizes_s": [0.5, 1.0]}
  })");
  CHECK(c.evaluation.preprocess.window_s == 0.75);
  CHECK(c.evaluation.architecture.base_channels == 16);
  CHECK(c.evaluation.train.max_steps == 1200);
  CHECK(c.evaluation.origin == ResidualOrigin::kOrigin);
  CHECK(c.evaluation.sweep_sizes_s == std::vector<double>{0.5, 1.0});

  const std::string snapshot = run_config_to_json(c);
  CHECK(parse_run_config(snapshot) == c);
  CHECK(run_config_to_json(parse_run_config(snapshot)) == snapshot);

  c.set_seed(42);
  CHECK(c.evaluation.train.seed == 42);
  CHECK(c.evaluation.split_seed == 42);
}

TEST_CASE("relative data paths resolve against the config directory") {
  const RunConfig c = parse_run_config(R"({"data": "m.json", "attackers": ["a/m.json"]})", "/cfg");
  CHECK(c.data == "/cfg/m.json");
  CHECK(c.attackers == std::vector<std::string>{"/cfg/a/m.json"});
}

TEST_CASE("family specs round-trip") {
  SyntheticFamilySpec spec;
  spec.users = 3;
  spec.noise_std = 0.0;
  CHECK(parse_family_spec(family_spec_to_json(spec)) == spec);
  CHECK_THROWS_AS(parse_family_spec(R"({"userz": 3})"), ConfigError);
}

TEST_CASE("model bundles") {
  const std::vector<SensorWindow> windows = raw_user_windows(80.0);
  const EvaluationConfig config = tiny_config();
  const std::span<const SensorWindow> all(windows);
  ModelBundle bundle = make_bundle(fit_user(all.subspan(0, 80), all.subspan(80, 60), config), config);
  const std::string bytes = serialize_bundle(bundle);
  TempDir dir("bundle");

  SUBCASE("save, load and save again is byte-identical") {
    save_bundle(bundle, dir / "a.raoc");
    const ModelBundle loaded = load_bundle(dir / "a.raoc");
    save_bundle(loaded, dir / "b.raoc");
    CHECK(raoc::testing::read_text(dir / "a.raoc") == bytes);
    CHECK(raoc::testing::read_text(dir / "b.raoc") == bytes);
    CHECK(loaded.user.tau == bundle.user.tau);
    CHECK(loaded.user.tail == bundle.user.tail);
    CHECK(loaded.train == bundle.train);
    CHECK(loaded.preprocess == bundle.preprocess);
  }
  SUBCASE("a reloaded bundle scores identically") {
    const ModelBundle loaded = parse_bundle(bytes);
    const auto probe = all.subspan(140, 10);
    const auto a = score_user(bundle.user, probe);
    const auto b = score_user(loaded.user, probe);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].log_p == b[i].log_p);
  }
  SUBCASE("bad magic") {
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK(error_text([&] { parse_bundle(bad); }).find("magic") != std::string::npos);
  }
  SUBCASE("another format version names both versions") {
    std::string other = bytes;
    const std::string key = "\"format_version\":1";
    const std::size_t at = other.find(key);
    REQUIRE(at != std::string::npos);
    other[at + key.size() - 1] = '7';
    const std::string what = error_text([&] { parse_bundle(other); });
    CHECK(what.find("version 7") != std::string::npos);
    CHECK(what.find("version 1") != std::string::npos);
  }
  SUBCASE("truncation") {
    CHECK_THROWS_AS(parse_bundle(std::string_view(bytes).substr(0, bytes.size() - 4)), IoError);
    CHECK_THROWS_AS(parse_bundle(std::string_view(bytes).substr(0, 12)), IoError);
    CHECK_THROWS_AS(load_bundle(dir / "missing.raoc"), IoError);
  }
}
