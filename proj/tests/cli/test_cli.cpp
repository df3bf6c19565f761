#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include "../support/temp_dir.hpp"

namespace fs = std::filesystem;
using raoc::testing::read_text;
using raoc::testing::TempDir;
using raoc::testing::write_text;

namespace {

struct Run {
  int exit_code;
  std::string err;
};

// Runs the CLI with stdout and stderr captured into the work directory.
Run raoc_cli(const TempDir& work, const std::string& args) {
  const fs::path err = work / "stderr.txt";
  const std::string command = std::string(RAOC_CLI_PATH) + " " + args + " >/dev/null 2>" + err.string();
  const int status = std::system(command.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_text(err)};
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n' ? 1 : 0;
  return n;
}

constexpr const char* kSmallFamily = R"({"users": 2, "sessions": 1, "duration_s": 260})";
constexpr const char* kTinyRun = R"({
  "architecture": {"base_channels": 8},
  "train": {"batch_size": 8, "max_steps": 5},
  "evaluation": {"max_impostor_windows": 60, "sweep_sizes_s": [0.25, 0.5]}
})";

}  // namespace

TEST_CASE("usage and configuration errors") {
  TempDir work("cli");
  CHECK(raoc_cli(work, "").exit_code == 2);
  CHECK(raoc_cli(work, "evaluate --mode nonsense").exit_code == 2);

  write_text(work / "bad.json", R"({"train": {"bogus_rate": 1}})");
  const Run bad = raoc_cli(work, "train --config " + (work / "bad.json").string());
  CHECK(bad.exit_code == 4);
  CHECK(bad.err.find("error CONFIG") != std::string::npos);
  CHECK(bad.err.find("train.bogus_rate") != std::string::npos);

  const Run missing = raoc_cli(work, "train --data " + (work / "absent.json").string());
  CHECK(missing.exit_code == 6);
  CHECK(missing.err.find("error IO") != std::string::npos);
}

TEST_CASE("generate writes a reproducible synthetic dataset") {
  TempDir work("cli");
  REQUIRE(raoc_cli(work, "generate --quiet --out " + (work / "a").string()).exit_code == 0);
  REQUIRE(raoc_cli(work, "generate --quiet --out " + (work / "b").string()).exit_code == 0);
  int users = 0;
  for (const auto& entry : fs::directory_iterator(work / "a")) users += entry.is_directory() ? 1 : 0;
  CHECK(users == 6);
  CHECK(fs::exists(work / "a" / "manifest.json"));
  for (const auto& entry : fs::recursive_directory_iterator(work / "a")) {
    if (!entry.is_regular_file() || entry.path().filename() == "manifest.json") continue;
    const fs::path twin = work / "b" / fs::relative(entry.path(), work / "a");
    CHECK(read_text(entry.path()) == read_text(twin));
  }
}

TEST_CASE("train, score and evaluate on a small dataset") {
  TempDir work("cli");
  write_text(work / "family.json", kSmallFamily);
  write_text(work / "run.json", kTinyRun);
  const std::string data = (work / "data" / "manifest.json").string();
  const std::string config = " --quiet --config " + (work / "run.json").string() + " --data " + data;
  REQUIRE(raoc_cli(work, "generate --quiet --spec " + (work / "family.json").string() + " --out " +
                             (work / "data").string())
              .exit_code == 0);

  const fs::path bundle = work / "model" / "model.raoc";
  const Run train = raoc_cli(work, "train" + config + " --user user0 --out " + bundle.string());
  REQUIRE(train.exit_code == 0);
  CHECK(fs::exists(bundle));
  CHECK(first_line(read_text(work / "model" / "model_training_log.csv")) ==
        "step,rec,latent_adv,sample_adv,gen_latent_adv,gen_sample_adv");
  CHECK(line_count(read_text(work / "model" / "model_training_log.csv")) == 6);
  CHECK(read_text(work / "model" / "resolved_config.json").find("\"max_steps\"") != std::string::npos);

  SUBCASE("score") {
    const fs::path csv = work / "scores" / "user1.csv";
    REQUIRE(raoc_cli(work, "score" + config + " --bundle " + bundle.string() + " --user user1 --out " +
                               csv.string())
                .exit_code == 0);
    const std::string text = read_text(csv);
    CHECK(first_line(text) ==
          "window_id,start_time,log_p,log_det_term,log_prior_term,log_perp_term,residual_norm,verdict");
    CHECK(line_count(text) == 521);
  }
  SUBCASE("scoring a user without full windows writes only the header") {
    write_text(work / "short.json", R"({"users": 1, "sessions": 1, "duration_s": 0.4})");
    REQUIRE(raoc_cli(work, "generate --quiet --spec " + (work / "short.json").string() + " --out " +
                               (work / "short").string())
                .exit_code == 0);
    const fs::path csv = work / "short_scores.csv";
    const Run run = raoc_cli(work, "score --quiet --bundle " + bundle.string() + " --data " +
                                       (work / "short" / "manifest.json").string() + " --out " + csv.string());
    CHECK(run.exit_code == 0);
    CHECK(line_count(read_text(csv)) == 1);
    CHECK(run.err.find("warning") != std::string::npos);
  }
  SUBCASE("holdout evaluation") {
    const fs::path out = work / "holdout";
    REQUIRE(raoc_cli(work, "evaluate" + config + " --mode holdout --out " + out.string()).exit_code == 0);
    CHECK(line_count(read_text(out / "metrics.csv")) == 3);
    CHECK(read_text(out / "summary.json").find("\"mean_eer\"") != std::string::npos);
    CHECK(fs::exists(out / "resolved_config.json"));
  }
  SUBCASE("window-size sweep") {
    const fs::path out = work / "sweep";
    REQUIRE(raoc_cli(work, "evaluate" + config + " --mode sweep --user user0 --out " + out.string()).exit_code ==
            0);
    const std::string text = read_text(out / "sweep.csv");
    CHECK(line_count(text) == 3);
    CHECK(text.find("\n0.25,25,") != std::string::npos);
    CHECK(text.find("\n0.5,50,") != std::string::npos);
  }
  SUBCASE("random attack with two sources") {
    for (const char* seed : {"21", "22"}) {
      write_text(work / (std::string("attacker") + seed + ".json"),
                 R"({"family": "attacker", "users": 2, "sessions": 1, "duration_s": 30})");
      REQUIRE(raoc_cli(work, std::string("generate --quiet --seed ") + seed + " --spec " +
                                 (work / (std::string("attacker") + seed + ".json")).string() + " --out " +
                                 (work / (std::string("attack") + seed)).string())
                  .exit_code == 0);
    }
    const fs::path out = work / "attack";
    const std::string attackers = " --attackers " + (work / "attack21" / "manifest.json").string() + " " +
                                  (work / "attack22" / "manifest.json").string();
    REQUIRE(raoc_cli(work, "evaluate" + config + " --mode attack --user user0" + attackers + " --out " +
                               out.string())
                .exit_code == 0);
    const std::string text = read_text(out / "metrics.csv");
    CHECK(line_count(text) == 3);
    CHECK(text.find("attack21/manifest") != std::string::npos);
    CHECK(text.find("attack22/manifest") != std::string::npos);
  }
}
