#include "raoc/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include <nlohmann/json.hpp>

namespace raoc {

namespace {

std::string num(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

std::string window_id(const SensorWindow& w) {
  return w.user_id + "/" + w.session_id + "@" + num(w.start_ms);
}

std::vector<std::size_t> permutation(std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<SensorWindow> pick(std::span<const SensorWindow> windows,
                               std::span<const std::size_t> indices) {
  std::vector<SensorWindow> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(windows[i]);
  return out;
}

// Keeps the original order of the surviving windows.
std::vector<SensorWindow> subsample(std::span<const SensorWindow> windows, std::size_t cap,
                                    std::uint64_t seed) {
  if (cap == 0 || windows.size() <= cap) return {windows.begin(), windows.end()};
  std::vector<std::size_t> order = permutation(windows.size(), seed ^ 0x5bd1e9955bd1e995ULL);
  order.resize(cap);
  std::sort(order.begin(), order.end());
  return pick(windows, order);
}

void require_single_user(std::span<const SensorWindow> windows, const char* what) {
  for (const SensorWindow& w : windows) {
    if (w.user_id != windows.front().user_id) {
      throw DataError(std::string(what) + " mixes users '" + windows.front().user_id + "' and '" +
                      w.user_id + "'");
    }
  }
}

void append_scores(std::vector<LabeledScore>& out, std::span<const SensorWindow> windows,
                   std::span<const ScoreBreakdown> scores, bool legitimate) {
  for (std::size_t i = 0; i < windows.size(); ++i) {
    out.push_back({scores[i].log_p, legitimate, window_id(windows[i])});
  }
}

}  // namespace

// --- Metrics ----------------------------------------------------------------

MetricReport compute_metrics(std::span<const LabeledScore> scores, double operating_threshold) {
  std::size_t legit = 0;
  for (const LabeledScore& s : scores) {
    if (!std::isfinite(s.score)) throw MetricError("score of '" + s.window_id + "' is not finite");
    legit += s.is_legitimate ? 1 : 0;
  }
  const std::size_t impostors = scores.size() - legit;
  if (legit == 0 || impostors == 0) {
    throw MetricError("metrics need both labels; got " + std::to_string(legit) + " legitimate and " +
                      std::to_string(impostors) + " impostor scores");
  }

  MetricReport r;
  r.threshold = operating_threshold;
  for (const LabeledScore& s : scores) {
    const bool accept = s.score >= operating_threshold;
    if (s.is_legitimate) {
      (accept ? r.true_accepts : r.false_rejects) += 1;
    } else {
      (accept ? r.false_accepts : r.true_rejects) += 1;
    }
  }
  const double nl = static_cast<double>(legit);
  const double ni = static_cast<double>(impostors);
  r.far = static_cast<double>(r.false_accepts) / ni;
  r.frr = static_cast<double>(r.false_rejects) / nl;

  // Distinct scores, descending, with the label counts at each.
  std::vector<std::pair<double, bool>> sorted;
  sorted.reserve(scores.size());
  for (const LabeledScore& s : scores) sorted.emplace_back(s.score, s.is_legitimate);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  struct Step {
    double score;
    std::size_t legit;
    std::size_t impostor;
  };
  std::vector<Step> steps;
  for (const auto& [score, is_legit] : sorted) {
    if (steps.empty() || steps.back().score != score) steps.push_back({score, 0, 0});
    (is_legit ? steps.back().legit : steps.back().impostor) += 1;
  }

  // ROC from accept-nothing downwards; the area is accumulated in integers
  // so separable and fully tied inputs come out exact.
  r.roc.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t accepted_legit = 0;
  std::size_t accepted_impostor = 0;
  long double area2 = 0.0L;  // twice the area, times legit * impostors
  for (const Step& s : steps) {
    area2 += static_cast<long double>(s.impostor) * (2.0L * accepted_legit + s.legit);
    accepted_legit += s.legit;
    accepted_impostor += s.impostor;
    r.roc.push_back({s.score, static_cast<double>(accepted_impostor) / ni,
                     static_cast<double>(accepted_legit) / nl});
  }
  r.auroc = static_cast<double>(area2 / (2.0L * static_cast<long double>(legit) * impostors));

  // Sweep from the highest threshold (FAR 0, FRR 1) to the lowest (FAR 1,
  // FRR 0); FAR - FRR rises monotonically from -1 to 1.
  double prev_gap = 0.0;
  for (std::size_t i = 0; i < r.roc.size(); ++i) {
    const double far = r.roc[i].far;
    const double frr = 1.0 - r.roc[i].tpr;
    const double gap = far - frr;
    if (gap >= 0.0) {
      if (gap == 0.0 || i == 0) {
        r.eer = far;
        r.eer_threshold = r.roc[i].threshold;
      } else {
        const RocPoint& a = r.roc[i - 1];
        const double t = -prev_gap / (gap - prev_gap);
        r.eer = a.far + t * (far - a.far);
        r.eer_threshold = std::isfinite(a.threshold)
                              ? a.threshold + t * (r.roc[i].threshold - a.threshold)
                              : r.roc[i].threshold;
      }
      break;
    }
    prev_gap = gap;
  }
  return r;
}

MetricSummary summarize(std::span<const MetricReport> reports) {
  MetricSummary s;
  s.count = reports.size();
  if (reports.empty()) return s;
  const auto stats = [&](auto field, double& mean, double& sd) {
    double sum = 0.0;
    for (const MetricReport& r : reports) sum += field(r);
    mean = sum / static_cast<double>(reports.size());
    double sq = 0.0;
    for (const MetricReport& r : reports) sq += (field(r) - mean) * (field(r) - mean);
    sd = std::sqrt(sq / static_cast<double>(reports.size()));
  };
  stats([](const MetricReport& r) { return r.far; }, s.mean_far, s.std_far);
  stats([](const MetricReport& r) { return r.frr; }, s.mean_frr, s.std_frr);
  stats([](const MetricReport& r) { return r.eer; }, s.mean_eer, s.std_eer);
  stats([](const MetricReport& r) { return r.auroc; }, s.mean_auroc, s.std_auroc);
  return s;
}

// --- Protocol ---------------------------------------------------------------

void EvaluationConfig::validate() const {
  preprocess.validate();
  train.validate();
  if (!(target_tpr > 0.0 && target_tpr < 1.0)) throw ConfigError("target_tpr must lie in (0, 1)");
  if (!(train_fraction > 0.0) || !(calibration_fraction > 0.0) ||
      !(train_fraction + calibration_fraction < 1.0)) {
    throw ConfigError("train and calibration fractions must be positive and leave a test share");
  }
  if (folds < 2) throw ConfigError("folds must be >= 2, got " + std::to_string(folds));
  for (double s : sweep_sizes_s) {
    PreprocessConfig p = preprocess;
    p.window_s = s;
    p.validate();
  }
}

NetworkSpec EvaluationConfig::network_spec() const {
  ArchitectureOptions options = architecture;
  options.window_length = preprocess.window_length();
  return default_network_spec(options);
}

LegitSplit split_legit(std::span<const SensorWindow> windows, const EvaluationConfig& config) {
  const std::size_t n = windows.size();
  const auto n_train = static_cast<std::size_t>(std::floor(config.train_fraction * n));
  const auto n_cal = static_cast<std::size_t>(std::floor(config.calibration_fraction * n));
  const std::vector<std::size_t> order = permutation(n, config.split_seed);
  const std::span<const std::size_t> all(order);
  LegitSplit out;
  out.train = pick(windows, all.subspan(0, n_train));
  out.calibration = pick(windows, all.subspan(n_train, n_cal));
  out.test = pick(windows, all.subspan(n_train + n_cal));
  return out;
}

TrainedUser fit_user(std::span<const SensorWindow> train_raw,
                     std::span<const SensorWindow> calibration_raw, const EvaluationConfig& config,
                     const PhaseObserver& observer) {
  if (train_raw.empty()) throw DataError("no training windows");
  require_single_user(train_raw, "training windows");
  if (calibration_raw.size() < kMinTailSamples) {
    throw DataError("insufficient data: calibration slice holds " +
                    std::to_string(calibration_raw.size()) + " windows, need " +
                    std::to_string(kMinTailSamples));
  }
  ArchitectureOptions options = config.architecture;
  options.window_length = train_raw.front().length;
  const NetworkSpec spec = default_network_spec(options);

  TrainedUser user;
  user.user_id = train_raw.front().user_id;
  user.origin = config.origin;
  user.stats = fit_normalization(train_raw);
  user.train_windows = train_raw.size();
  {
    const std::vector<SensorWindow> train_norm = apply_normalization(train_raw, user.stats);
    TrainResult trained = train(train_norm, spec, config.train, observer);
    user.model = std::move(trained.model);
    user.log = std::move(trained.log);
  }
  const std::vector<SensorWindow> cal_norm = apply_normalization(calibration_raw, user.stats);
  const NetworkManifold manifold(user.model);
  Calibration cal = calibrate(cal_norm, manifold, config.target_tpr, config.origin);
  user.tail = std::move(cal.tail);
  user.tau = cal.tau;
  for (const ScoreBreakdown& s : cal.scores) user.calibration_scores.push_back(s.log_p);
  return user;
}

std::vector<ScoreBreakdown> score_user(const TrainedUser& user, std::span<const SensorWindow> raw) {
  if (raw.empty()) return {};
  const std::vector<SensorWindow> normalized = apply_normalization(raw, user.stats);
  const NetworkManifold manifold(user.model);
  return score_windows(normalized, manifold, user.tail, user.tau, user.origin);
}

UserEvaluation evaluate_user(std::span<const SensorWindow> legit_raw,
                             std::span<const SensorWindow> impostor_raw,
                             const EvaluationConfig& config, const PhaseObserver& observer) {
  config.validate();
  if (legit_raw.empty()) throw DataError("insufficient data: no legitimate windows");
  if (impostor_raw.empty()) throw DataError("insufficient data: no impostor windows");
  require_single_user(legit_raw, "legitimate windows");
  LegitSplit split = split_legit(legit_raw, config);
  if (split.train.size() < static_cast<std::size_t>(config.train.batch_size) || split.test.empty()) {
    throw DataError("insufficient data: " + std::to_string(legit_raw.size()) +
                    " legitimate windows leave " + std::to_string(split.train.size()) +
                    " for training and " + std::to_string(split.test.size()) + " for testing");
  }
  const std::vector<SensorWindow> impostors =
      subsample(impostor_raw, config.max_impostor_windows, config.split_seed);

  UserEvaluation out;
  out.label = legit_raw.front().user_id;
  out.user = fit_user(split.train, split.calibration, config, observer);
  out.calibration_windows = split.calibration.size();
  out.impostor_windows = impostors.size();
  append_scores(out.scores, split.test, score_user(out.user, split.test), true);
  append_scores(out.scores, impostors, score_user(out.user, impostors), false);
  out.metrics = compute_metrics(out.scores, out.user.tau);
  out.test_legit_raw = std::move(split.test);
  return out;
}

std::vector<std::vector<std::size_t>> fold_assignment(std::size_t count, int folds,
                                                      std::uint64_t seed) {
  if (folds < 2) throw ConfigError("folds must be >= 2, got " + std::to_string(folds));
  const std::vector<std::size_t> order = permutation(count, seed);
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(folds));
  const std::size_t base = count / folds;
  const std::size_t extra = count % folds;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < out.size(); ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    out[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                  order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return out;
}

CrossValidation cross_validate(std::span<const SensorWindow> legit_raw,
                               std::span<const SensorWindow> impostor_raw,
                               const EvaluationConfig& config) {
  config.validate();
  require_single_user(legit_raw, "legitimate windows");
  if (impostor_raw.empty()) throw DataError("insufficient data: no impostor windows");
  const auto assignment = fold_assignment(legit_raw.size(), config.folds, config.split_seed);
  const double cal_share =
      config.calibration_fraction / (config.train_fraction + config.calibration_fraction);
  const std::vector<SensorWindow> impostors =
      subsample(impostor_raw, config.max_impostor_windows, config.split_seed);

  CrossValidation out;
  for (std::size_t f = 0; f < assignment.size(); ++f) {
    if (assignment[f].empty()) {
      throw DataError("too few windows per fold: " + std::to_string(legit_raw.size()) +
                      " windows over " + std::to_string(config.folds) + " folds");
    }
    std::vector<std::size_t> rest;
    for (std::size_t g = 0; g < assignment.size(); ++g) {
      if (g != f) rest.insert(rest.end(), assignment[g].begin(), assignment[g].end());
    }
    const auto n_cal = static_cast<std::size_t>(std::floor(cal_share * rest.size()));
    const std::span<const std::size_t> rest_span(rest);
    const std::vector<SensorWindow> train = pick(legit_raw, rest_span.subspan(0, rest.size() - n_cal));
    const std::vector<SensorWindow> cal = pick(legit_raw, rest_span.subspan(rest.size() - n_cal));
    const std::vector<SensorWindow> test = pick(legit_raw, assignment[f]);
    if (train.size() < static_cast<std::size_t>(config.train.batch_size)) {
      throw DataError("too few windows per fold: " + std::to_string(train.size()) +
                      " training windows in fold " + std::to_string(f));
    }
    const TrainedUser user = fit_user(train, cal, config);
    std::vector<LabeledScore> scores;
    append_scores(scores, test, score_user(user, test), true);
    append_scores(scores, impostors, score_user(user, impostors), false);
    out.folds.push_back(compute_metrics(scores, user.tau));
    out.test_sizes.push_back(test.size());
  }
  out.summary = summarize(out.folds);
  return out;
}

std::vector<SweepRow> window_size_sweep(std::span<const SensorRecording> legit,
                                        std::span<const SensorRecording> impostors,
                                        std::span<const double> sizes_s,
                                        const EvaluationConfig& config) {
  std::vector<SweepRow> rows;
  for (double size : sizes_s) {
    EvaluationConfig sized = config;
    sized.preprocess.window_s = size;
    sized.validate();
    const std::vector<SensorWindow> legit_windows = extract_windows(legit, sized.preprocess).windows;
    const std::vector<SensorWindow> impostor_windows =
        extract_windows(impostors, sized.preprocess).windows;
    const UserEvaluation eval = evaluate_user(legit_windows, impostor_windows, sized);
    rows.push_back({size, sized.preprocess.window_length(), legit_windows.size(),
                    eval.impostor_windows, eval.metrics});
  }
  return rows;
}

std::vector<AttackReport> random_attack_eval(const TrainedUser& user,
                                             std::span<const SensorWindow> test_legit_raw,
                                             std::span<const AttackSource> sources,
                                             const EvaluationConfig& config) {
  if (test_legit_raw.empty()) throw DataError("no held-out legitimate windows to attack");
  std::vector<LabeledScore> legit_scores;
  append_scores(legit_scores, test_legit_raw, score_user(user, test_legit_raw), true);

  std::vector<AttackReport> out;
  for (const AttackSource& source : sources) {
    const std::vector<SensorWindow> raw = subsample(
        extract_windows(source.recordings, config.preprocess).windows, config.max_impostor_windows,
        config.split_seed);
    if (raw.empty()) {
      throw DataError("attacker source '" + source.name + "' is empty after preprocessing");
    }
    if (raw.front().length != test_legit_raw.front().length) {
      throw ConfigError("attacker windows of '" + source.name + "' have length " +
                        std::to_string(raw.front().length) + ", model expects " +
                        std::to_string(test_legit_raw.front().length));
    }
    std::vector<LabeledScore> scores = legit_scores;
    append_scores(scores, raw, score_user(user, raw), false);
    out.push_back({source.name, raw.size(), compute_metrics(scores, user.tau)});
  }
  return out;
}

DatasetEvaluation evaluate_dataset(const LoadedDataset& dataset, const EvaluationConfig& config,
                                   std::span<const std::string> users, bool cross_validated) {
  std::vector<std::string> ids(users.begin(), users.end());
  if (ids.empty()) {
    for (const UserRecordings& u : dataset.users) ids.push_back(u.user_id);
  }
  DatasetEvaluation out;
  for (const std::string& id : ids) {
    const UserRecordings* legit = dataset.find_user(id);
    if (legit == nullptr) throw DataError("user '" + id + "' is not in the dataset");
    std::vector<SensorRecording> others;
    for (const UserRecordings& u : dataset.users) {
      if (u.user_id != id) others.insert(others.end(), u.recordings.begin(), u.recordings.end());
    }
    const std::vector<SensorWindow> legit_windows =
        extract_windows(legit->recordings, config.preprocess).windows;
    const std::vector<SensorWindow> impostor_windows =
        extract_windows(others, config.preprocess).windows;
    if (cross_validated) {
      const CrossValidation cv = cross_validate(legit_windows, impostor_windows, config);
      for (std::size_t f = 0; f < cv.folds.size(); ++f) {
        out.users.push_back(id + "/fold" + std::to_string(f));
        out.reports.push_back(cv.folds[f]);
      }
    } else {
      out.users.push_back(id);
      out.reports.push_back(evaluate_user(legit_windows, impostor_windows, config).metrics);
    }
  }
  out.summary = summarize(out.reports);
  return out;
}

// --- Reports ----------------------------------------------------------------

void write_metrics_csv(std::ostream& out, std::span<const ReportRow> rows) {
  out << "label,far,frr,eer,auroc,threshold,eer_threshold,tp,fp,tn,fn\n";
  for (const ReportRow& row : rows) {
    const MetricReport& m = row.metrics;
    out << row.label << ',' << num(m.far) << ',' << num(m.frr) << ',' << num(m.eer) << ','
        << num(m.auroc) << ',' << num(m.threshold) << ',' << num(m.eer_threshold) << ','
        << m.true_accepts << ',' << m.false_accepts << ',' << m.true_rejects << ','
        << m.false_rejects << '\n';
  }
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "size_s,window_length,legit_windows,impostor_windows,far,frr,eer,auroc,threshold\n";
  for (const SweepRow& row : rows) {
    const MetricReport& m = row.metrics;
    out << num(row.size_s) << ',' << row.window_length << ',' << row.legit_windows << ','
        << row.impostor_windows << ',' << num(m.far) << ',' << num(m.frr) << ',' << num(m.eer)
        << ',' << num(m.auroc) << ',' << num(m.threshold) << '\n';
  }
}

std::string metrics_summary_json(const std::string& mode, std::span<const ReportRow> rows,
                                 const EvaluationConfig& config) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["mode"] = mode;
  std::vector<MetricReport> reports;
  ordered_json entries = ordered_json::array();
  for (const ReportRow& row : rows) {
    const MetricReport& m = row.metrics;
    reports.push_back(m);
    entries.push_back({{"label", row.label},
                       {"far", m.far},
                       {"frr", m.frr},
                       {"eer", m.eer},
                       {"auroc", m.auroc},
                       {"threshold", m.threshold},
                       {"true_accepts", m.true_accepts},
                       {"false_accepts", m.false_accepts},
                       {"true_rejects", m.true_rejects},
                       {"false_rejects", m.false_rejects}});
  }
  const MetricSummary s = summarize(reports);
  j["count"] = s.count;
  j["mean_far"] = s.mean_far;
  j["std_far"] = s.std_far;
  j["mean_frr"] = s.mean_frr;
  j["std_frr"] = s.std_frr;
  j["mean_eer"] = s.mean_eer;
  j["std_eer"] = s.std_eer;
  j["mean_auroc"] = s.mean_auroc;
  j["std_auroc"] = s.std_auroc;
  ordered_json by_label = ordered_json::object();
  for (const ordered_json& e : entries) by_label[e["label"].get<std::string>()] = e;
  j["rows"] = std::move(entries);
  j["by_label"] = std::move(by_label);
  j["policy"] = {
      {"split", "train " + num(config.train_fraction) + " / calibration " +
                    num(config.calibration_fraction) + " / test remainder"},
      {"threshold", "lower empirical quantile of calibration scores at the target TPR"},
      {"target_tpr", config.target_tpr},
      {"folds", config.folds},
      {"std", "population"},
  };
  ordered_json refs = ordered_json::array();
  for (const ReferencePoint& p :
       {kReferenceHmog, kReferenceBrainRunAttack, kReferenceWindow025, kReferenceWindow050}) {
    ordered_json r{{"label", p.label}, {"eer_percent", p.eer}};
    if (p.far >= 0.0) r["far_percent"] = p.far;
    if (p.frr >= 0.0) r["frr_percent"] = p.frr;
    if (p.auroc >= 0.0) r["auroc"] = p.auroc;
    refs.push_back(std::move(r));
  }
  j["reference"] = std::move(refs);
  return j.dump(2) + "\n";
}

}  // namespace raoc
