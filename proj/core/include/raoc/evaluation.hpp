#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "raoc/errors.hpp"
#include "raoc/ingestion.hpp"
#include "raoc/networks.hpp"
#include "raoc/preprocessing.hpp"
#include "raoc/scoring.hpp"
#include "raoc/training.hpp"

namespace raoc {

class MetricError : public DataError {
 public:
  explicit MetricError(const std::string& what) : DataError(what) {}
};

struct LabeledScore {
  double score = 0.0;  // log-density; higher means more legitimate
  bool is_legitimate = false;
  std::string window_id;
};

struct RocPoint {
  double threshold = 0.0;  // accept when score >= threshold
  double far = 0.0;
  double tpr = 0.0;
};

// A window is accepted when its score is at least the threshold.
struct MetricReport {
  double far = 0.0;
  double frr = 0.0;
  double eer = 0.0;
  double auroc = 0.0;
  double threshold = 0.0;
  double eer_threshold = 0.0;  // interpolated score at the crossing
  std::size_t true_accepts = 0;
  std::size_t false_accepts = 0;
  std::size_t true_rejects = 0;
  std::size_t false_rejects = 0;
  // From accept-nothing (0, 0) to accept-everything (1, 1), one point per
  // distinct score.
  std::vector<RocPoint> roc;

  std::size_t legitimate_count() const { return true_accepts + false_rejects; }
  std::size_t impostor_count() const { return false_accepts + true_rejects; }
};

// Throws MetricError unless both labels are present and every score is finite.
// The EER is read where FAR - FRR changes sign over the sweep of distinct
// scores, interpolating linearly between the two adjacent sweep points. Equal
// scores form one sweep step, so ties trace a diagonal of the ROC.
MetricReport compute_metrics(std::span<const LabeledScore> scores, double operating_threshold);

// Published holdout figures, in percent, kept for comparison in reports.
struct ReferencePoint {
  const char* label;
  double far;
  double frr;
  double eer;
  double auroc;  // fraction; negative when not published
};
inline constexpr ReferencePoint kReferenceHmog{"hmog_holdout", 0.77, 1.39, 1.05, 0.998};
inline constexpr ReferencePoint kReferenceBrainRunAttack{"brainrun_attack", 0.01, 1.41, 1.28, 0.996};
inline constexpr ReferencePoint kReferenceWindow025{"hmog_window_0.25s", -1.0, -1.0, 19.36, -1.0};
inline constexpr ReferencePoint kReferenceWindow050{"hmog_window_0.50s", -1.0, -1.0, 1.05, -1.0};

struct EvaluationConfig {
  PreprocessConfig preprocess;
  // window_length is taken from the preprocessing window.
  ArchitectureOptions architecture;
  TrainConfig train;
  double target_tpr = 0.97;
  ResidualOrigin origin = ResidualOrigin::kReconstruction;
  // Legit windows are split train / calibration / test; test takes the rest.
  double train_fraction = 0.8;
  double calibration_fraction = 0.1;
  std::uint64_t split_seed = 0;
  // Seeded subsample of the impostor windows; 0 keeps all of them.
  std::size_t max_impostor_windows = 0;
  int folds = 10;
  std::vector<double> sweep_sizes_s{0.25, 0.5, 0.75, 1.0, 1.25, 1.5};

  void validate() const;
  NetworkSpec network_spec() const;
  bool operator==(const EvaluationConfig&) const = default;
};

// Everything needed to score new windows for one user.
struct TrainedUser {
  std::string user_id;
  Model model;
  TrainingLog log;
  NormalizationStats stats;
  ResidualTailDensity tail;
  double tau = 0.0;
  ResidualOrigin origin = ResidualOrigin::kReconstruction;
  std::vector<double> calibration_scores;
  std::size_t train_windows = 0;
};

struct LegitSplit {
  std::vector<SensorWindow> train;
  std::vector<SensorWindow> calibration;
  std::vector<SensorWindow> test;
};

// Seeded shuffle, then the first floor(train_fraction * N) windows train and
// the next floor(calibration_fraction * N) calibrate.
LegitSplit split_legit(std::span<const SensorWindow> windows, const EvaluationConfig& config);

// Fits normalization on the training slice, trains, then fits the residual
// tail and threshold on the normalized calibration slice. Raw windows in,
// all from one user.
TrainedUser fit_user(std::span<const SensorWindow> train_raw,
                     std::span<const SensorWindow> calibration_raw, const EvaluationConfig& config,
                     const PhaseObserver& observer = {});

// Normalizes with the user's stats and scores against the user's threshold.
std::vector<ScoreBreakdown> score_user(const TrainedUser& user, std::span<const SensorWindow> raw);

struct UserEvaluation {
  std::string label;
  MetricReport metrics;
  TrainedUser user;
  std::vector<SensorWindow> test_legit_raw;
  std::vector<LabeledScore> scores;
  std::size_t calibration_windows = 0;
  std::size_t impostor_windows = 0;
};

// Impostor windows never reach training; only the legit split does.
UserEvaluation evaluate_user(std::span<const SensorWindow> legit_raw,
                             std::span<const SensorWindow> impostor_raw,
                             const EvaluationConfig& config, const PhaseObserver& observer = {});

struct MetricSummary {
  double mean_far = 0.0, std_far = 0.0;
  double mean_frr = 0.0, std_frr = 0.0;
  double mean_eer = 0.0, std_eer = 0.0;
  double mean_auroc = 0.0, std_auroc = 0.0;
  std::size_t count = 0;
};

// Population standard deviation over the reports.
MetricSummary summarize(std::span<const MetricReport> reports);

struct CrossValidation {
  std::vector<MetricReport> folds;
  std::vector<std::size_t> test_sizes;
  MetricSummary summary;
};

// Contiguous chunks of one seeded permutation; chunk sizes differ by at most
// one. Each fold carves its calibration slice off the training folds in the
// calibration : train ratio.
std::vector<std::vector<std::size_t>> fold_assignment(std::size_t count, int folds,
                                                      std::uint64_t seed);

CrossValidation cross_validate(std::span<const SensorWindow> legit_raw,
                               std::span<const SensorWindow> impostor_raw,
                               const EvaluationConfig& config);

struct SweepRow {
  double size_s = 0.0;
  int window_length = 0;
  std::size_t legit_windows = 0;
  std::size_t impostor_windows = 0;
  MetricReport metrics;
};

// Reruns extraction, training and scoring per window size.
std::vector<SweepRow> window_size_sweep(std::span<const SensorRecording> legit,
                                        std::span<const SensorRecording> impostors,
                                        std::span<const double> sizes_s,
                                        const EvaluationConfig& config);

struct AttackSource {
  std::string name;
  std::vector<SensorRecording> recordings;
};

struct AttackReport {
  std::string source;
  std::size_t attacker_windows = 0;
  MetricReport metrics;
};

// Attacker windows are extracted with the legit user's preprocessing and
// normalized with the legit user's stats; positives are the held-out legit
// windows.
std::vector<AttackReport> random_attack_eval(const TrainedUser& user,
                                             std::span<const SensorWindow> test_legit_raw,
                                             std::span<const AttackSource> sources,
                                             const EvaluationConfig& config);

struct DatasetEvaluation {
  std::vector<std::string> users;
  std::vector<MetricReport> reports;
  MetricSummary summary;
};

// Each listed user (all when empty) against every other user of the dataset,
// either holdout or cross-validated.
DatasetEvaluation evaluate_dataset(const LoadedDataset& dataset, const EvaluationConfig& config,
                                   std::span<const std::string> users, bool cross_validated);

// --- Reports ----------------------------------------------------------------

struct ReportRow {
  std::string label;
  MetricReport metrics;
};

// label,far,frr,eer,auroc,threshold,eer_threshold,tp,fp,tn,fn
void write_metrics_csv(std::ostream& out, std::span<const ReportRow> rows);

// size_s,window_length,legit_windows,impostor_windows,far,frr,eer,auroc,threshold
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);

// JSON object with per-row metrics, means and standard deviations, the
// published reference points and the split policy in force.
std::string metrics_summary_json(const std::string& mode, std::span<const ReportRow> rows,
                                 const EvaluationConfig& config);

}  // namespace raoc
