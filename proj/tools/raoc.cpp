// raoc: train, score and evaluate per-user authentication models on
// smartphone motion-sensor recordings.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "raoc/bundle.hpp"
#include "raoc/config.hpp"
#include "raoc/errors.hpp"
#include "raoc/evaluation.hpp"
#include "raoc/ingestion.hpp"

namespace fs = std::filesystem;
using namespace raoc;

namespace {

// Exit codes; one per error class.
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitConfig = 4;
constexpr int kExitNumeric = 5;
constexpr int kExitIo = 6;
constexpr int kExitInternal = 1;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App& cmd, CommonOptions& opts, const std::string& out_help) {
  cmd.add_option("--config", opts.config_path, "JSON run configuration");
  cmd.add_option("--seed", opts.seed, "Seed for training and data splits (overrides config)");
  cmd.add_option("--out", opts.out, out_help);
  cmd.add_flag("--quiet", opts.quiet, "Suppress progress on stderr");
}

RunConfig resolve_config(const CommonOptions& opts) {
  RunConfig config = opts.config_path.empty() ? parse_run_config("{}") : load_run_config(opts.config_path);
  if (opts.seed) config.set_seed(*opts.seed);
  return config;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_snapshot(const fs::path& dir, const RunConfig& config) {
  write_text(dir / "resolved_config.json", run_config_to_json(config));
}

class Progress {
 public:
  explicit Progress(bool quiet) : quiet_(quiet) {}

  template <typename... Args>
  void note(const Args&... args) const {
    if (quiet_) return;
    std::ostringstream line;
    (line << ... << args);
    std::cerr << line.str() << '\n';
  }

  PhaseObserver observer(std::int64_t every = 100) const {
    if (quiet_) return {};
    return [every](const PhaseEvent& e) {
      if (e.phase == Phase::kAutoencoder && e.step % every == 0) {
        std::cerr << "step " << e.step << " autoencoder loss " << e.loss << '\n';
      }
    };
  }

 private:
  bool quiet_;
};

std::string pick_user(const RunConfig& config, const LoadedDataset& dataset) {
  if (!config.user.empty()) return config.user;
  if (dataset.users.empty()) throw DataError("dataset lists no users");
  return dataset.users.front().user_id;
}

std::vector<SensorRecording> recordings_except(const LoadedDataset& dataset, const std::string& user) {
  std::vector<SensorRecording> out;
  for (const UserRecordings& u : dataset.users) {
    if (u.user_id != user) out.insert(out.end(), u.recordings.begin(), u.recordings.end());
  }
  return out;
}

const UserRecordings& require_user(const LoadedDataset& dataset, const std::string& user) {
  const UserRecordings* found = dataset.find_user(user);
  if (found == nullptr) throw DataError("user '" + user + "' is not in the dataset");
  return *found;
}

// --- train ------------------------------------------------------------------

int run_train(RunConfig config, const CommonOptions& opts) {
  const Progress progress(opts.quiet);
  if (config.data.empty()) throw ConfigError("no dataset manifest; pass --data or set 'data'");
  const fs::path bundle_path = opts.out.empty() ? fs::path(config.output_dir) / "model.raoc" : fs::path(opts.out);
  config.output_dir = bundle_path.has_parent_path() ? bundle_path.parent_path().string() : ".";

  const LoadedDataset dataset = load_dataset(load_manifest(config.data));
  config.user = pick_user(config, dataset);
  const UserRecordings& user = require_user(dataset, config.user);
  const EvaluationConfig& eval = config.evaluation;
  const std::vector<SensorWindow> windows = extract_windows(user.recordings, eval.preprocess).windows;
  const LegitSplit split = split_legit(windows, eval);
  progress.note("user ", config.user, ": ", windows.size(), " windows, ", split.train.size(),
                " train, ", split.calibration.size(), " calibration");
  if (split.train.size() < static_cast<std::size_t>(eval.train.batch_size)) {
    throw DataError("insufficient data: " + std::to_string(split.train.size()) +
                    " training windows for batch size " + std::to_string(eval.train.batch_size));
  }

  TrainedUser trained = fit_user(split.train, split.calibration, eval, progress.observer());
  progress.note("threshold ", trained.tau);
  std::ostringstream log;
  trained.log.write_csv(log);
  write_text(fs::path(config.output_dir) / (bundle_path.stem().string() + "_training_log.csv"), log.str());
  save_bundle(make_bundle(std::move(trained), eval), bundle_path);
  write_snapshot(config.output_dir, config);
  progress.note("wrote ", bundle_path.string());
  return 0;
}

// --- score ------------------------------------------------------------------

std::string num(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

int run_score(RunConfig config, const CommonOptions& opts, const std::string& bundle_path) {
  const Progress progress(opts.quiet);
  if (config.data.empty()) throw ConfigError("no dataset manifest; pass --data or set 'data'");
  const ModelBundle bundle = load_bundle(bundle_path);
  const fs::path csv_path = opts.out.empty() ? fs::path(config.output_dir) / "scores.csv" : fs::path(opts.out);
  config.output_dir = csv_path.has_parent_path() ? csv_path.parent_path().string() : ".";
  if (config.user.empty()) config.user = bundle.user.user_id;

  const LoadedDataset dataset = load_dataset(load_manifest(config.data), config.user);
  const UserRecordings& user = require_user(dataset, config.user);
  const std::vector<SensorWindow> windows = extract_windows(user.recordings, bundle.preprocess).windows;
  if (windows.empty()) {
    std::cerr << "warning: no windows for user '" << config.user << "' after preprocessing\n";
  }
  const std::vector<ScoreBreakdown> scores = score_user(bundle.user, windows);

  std::ostringstream csv;
  csv << "window_id,start_time,log_p,log_det_term,log_prior_term,log_perp_term,residual_norm,verdict\n";
  std::size_t accepted = 0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const SensorWindow& w = windows[i];
    const ScoreBreakdown& s = scores[i];
    accepted += s.verdict == Verdict::kAccept ? 1 : 0;
    csv << w.user_id << '/' << w.session_id << '/' << i << ',' << num(w.start_ms) << ',' << num(s.log_p)
        << ',' << num(s.log_det_term) << ',' << num(s.log_prior_term) << ',' << num(s.log_perp_term)
        << ',' << num(s.residual_norm) << ',' << to_string(s.verdict) << '\n';
  }
  write_text(csv_path, csv.str());
  write_snapshot(config.output_dir, config);
  progress.note(accepted, " of ", windows.size(), " windows accepted; wrote ", csv_path.string());
  return 0;
}

// --- evaluate ---------------------------------------------------------------

void write_reports(const fs::path& dir, const std::string& mode, const std::vector<ReportRow>& rows,
                   const EvaluationConfig& eval) {
  std::ostringstream csv;
  write_metrics_csv(csv, rows);
  write_text(dir / "metrics.csv", csv.str());
  write_text(dir / "summary.json", metrics_summary_json(mode, rows, eval));
}

int run_evaluate(RunConfig config, const CommonOptions& opts, const std::string& mode) {
  const Progress progress(opts.quiet);
  if (config.data.empty()) throw ConfigError("no dataset manifest; pass --data or set 'data'");
  if (!opts.out.empty()) config.output_dir = opts.out;
  const fs::path dir = config.output_dir;
  const EvaluationConfig& eval = config.evaluation;
  const LoadedDataset dataset = load_dataset(load_manifest(config.data));

  if (mode == "holdout" || mode == "cv") {
    const DatasetEvaluation result = evaluate_dataset(dataset, eval, config.users, mode == "cv");
    std::vector<ReportRow> rows;
    for (std::size_t i = 0; i < result.reports.size(); ++i) rows.push_back({result.users[i], result.reports[i]});
    write_reports(dir, mode, rows, eval);
    progress.note("mean EER ", result.summary.mean_eer, " over ", result.summary.count, " runs");
  } else if (mode == "sweep") {
    config.user = pick_user(config, dataset);
    const UserRecordings& legit = require_user(dataset, config.user);
    const std::vector<SensorRecording> others = recordings_except(dataset, config.user);
    const std::vector<SweepRow> sweep = window_size_sweep(legit.recordings, others, eval.sweep_sizes_s, eval);
    std::ostringstream csv;
    write_sweep_csv(csv, sweep);
    write_text(dir / "sweep.csv", csv.str());
    std::vector<ReportRow> rows;
    for (const SweepRow& r : sweep) rows.push_back({num(r.size_s) + "s", r.metrics});
    write_text(dir / "summary.json", metrics_summary_json(mode, rows, eval));
  } else if (mode == "attack") {
    if (config.attackers.empty()) throw ConfigError("attack mode needs at least one attacker manifest");
    config.user = pick_user(config, dataset);
    const UserRecordings& legit = require_user(dataset, config.user);
    const std::vector<SensorWindow> windows = extract_windows(legit.recordings, eval.preprocess).windows;
    const LegitSplit split = split_legit(windows, eval);
    const TrainedUser trained = fit_user(split.train, split.calibration, eval, progress.observer());
    std::vector<AttackSource> sources;
    for (const std::string& path : config.attackers) {
      AttackSource source{fs::path(path).parent_path().filename().string() + "/" + fs::path(path).stem().string(), {}};
      for (UserRecordings& u : load_dataset(load_manifest(path)).users) {
        source.recordings.insert(source.recordings.end(), u.recordings.begin(), u.recordings.end());
      }
      sources.push_back(std::move(source));
    }
    const std::vector<AttackReport> reports = random_attack_eval(trained, split.test, sources, eval);
    std::vector<ReportRow> rows;
    for (const AttackReport& r : reports) rows.push_back({r.source, r.metrics});
    write_reports(dir, mode, rows, eval);
  } else {
    throw ConfigError("unknown evaluation mode '" + mode + "'");
  }
  write_snapshot(dir, config);
  progress.note("wrote reports to ", dir.string());
  return 0;
}

// --- generate ---------------------------------------------------------------

int run_generate(const CommonOptions& opts, const std::string& spec_path) {
  const Progress progress(opts.quiet);
  SyntheticFamilySpec spec = spec_path.empty() ? SyntheticFamilySpec{} : load_family_spec(spec_path);
  if (opts.seed) spec.seed = *opts.seed;
  spec.validate();
  const fs::path dir = opts.out.empty() ? fs::path("synthetic") : fs::path(opts.out);
  const std::vector<UserRecordings> users = generate_family(spec);
  write_generic_dataset(dir, users);
  write_text(dir / "resolved_spec.json", family_spec_to_json(spec));
  progress.note("wrote ", users.size(), " users to ", dir.string());
  return 0;
}

int exit_code(ErrorClass cls) {
  switch (cls) {
    case ErrorClass::kData: return kExitData;
    case ErrorClass::kConfig: return kExitConfig;
    case ErrorClass::kNumeric: return kExitNumeric;
    case ErrorClass::kIo: return kExitIo;
  }
  return kExitInternal;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relative-attention one-class authentication on motion-sensor data"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string data;
  std::string user;
  std::string bundle;
  std::string mode = "holdout";
  std::vector<std::string> attackers;
  std::string spec;

  CLI::App* train = app.add_subcommand("train", "Train and calibrate one user's model");
  add_common(*train, opts, "Bundle path (default <output_dir>/model.raoc)");
  train->add_option("--data", data, "Dataset manifest");
  train->add_option("--user", user, "User to train");

  CLI::App* score = app.add_subcommand("score", "Score a user's windows with a bundle");
  add_common(*score, opts, "Score CSV path (default <output_dir>/scores.csv)");
  score->add_option("--bundle", bundle, "Model bundle")->required();
  score->add_option("--data", data, "Dataset manifest");
  score->add_option("--user", user, "User to score (default: the bundle's user)");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Run an evaluation protocol");
  add_common(*evaluate, opts, "Report directory (default <output_dir>)");
  evaluate->add_option("--data", data, "Dataset manifest");
  evaluate->add_option("--mode", mode, "holdout, cv, sweep or attack")
      ->check(CLI::IsMember({"holdout", "cv", "sweep", "attack"}));
  evaluate->add_option("--user", user, "Legitimate user for sweep and attack");
  evaluate->add_option("--attackers", attackers, "Attacker dataset manifests");

  CLI::App* generate = app.add_subcommand("generate", "Write a synthetic dataset");
  add_common(*generate, opts, "Output directory");
  generate->add_option("--spec", spec, "JSON synthetic family spec");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (generate->parsed()) return run_generate(opts, spec);
    RunConfig config = resolve_config(opts);
    if (!data.empty()) config.data = data;
    if (!user.empty()) config.user = user;
    if (!attackers.empty()) config.attackers = attackers;
    if (train->parsed()) return run_train(std::move(config), opts);
    if (score->parsed()) return run_score(std::move(config), opts, bundle);
    return run_evaluate(std::move(config), opts, mode);
  } catch (const Error& e) {
    std::cerr << "error " << to_string(e.error_class()) << ": " << e.what() << '\n';
    return exit_code(e.error_class());
  } catch (const std::exception& e) {
    std::cerr << "error INTERNAL: " << e.what() << '\n';
    return kExitInternal;
  }
}
