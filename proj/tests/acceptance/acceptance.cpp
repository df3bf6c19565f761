// Desk-scale acceptance run. Prints one PASS / FAIL / SKIP line per criterion
// and exits nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../support/attention_oracle.hpp"
#include "../support/metric_oracle.hpp"
#include "../support/random.hpp"
#include "../support/scoring_oracle.hpp"
#include "../support/synthetic.hpp"
#include "raoc/attention.hpp"
#include "raoc/bundle.hpp"
#include "raoc/evaluation.hpp"
#include "raoc/ingestion.hpp"
#include "raoc/networks.hpp"
#include "raoc/preprocessing.hpp"
#include "raoc/scoring.hpp"
#include "raoc/training.hpp"

using namespace raoc;
using namespace raoc::testing;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome verdict(bool ok, const std::string& detail) { return {ok ? Status::kPass : Status::kFail, detail}; }

// Formats its arguments like an ostream would.
template <typename... Args>
std::string str(const Args&... args) {
  std::ostringstream s;
  s << std::setprecision(4);
  (s << ... << args);
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

// --- attention ----------------------------------------------------------------

Outcome attention_oracle() {
  std::mt19937_64 rng(101);
  constexpr int kCases = 120;
  double worst_output = 0.0, worst_sum = 0.0;
  for (int trial = 0; trial < kCases; ++trial) {
    AttentionConfig c;
    c.in_channels = random_int(rng, 1, 8);
    c.out_channels = random_int(rng, 1, 8);
    c.neighborhood = 1 + 2 * random_int(rng, 0, 2);
    c.projection_kernel = random_int(rng, 0, 1) == 0 ? 1 : 3;
    c.projection_bias = random_int(rng, 0, 1) == 1;
    const int h = random_int(rng, 1, 12), w = random_int(rng, 1, 12), n = random_int(rng, 1, 2);
    const auto params = random_attention_params<double>(c, rng);
    const auto x = random_tensor<double>({n, c.in_channels, h, w}, rng);
    AttentionTrace<double> trace;
    const Tensor<double> y = relative_attention_forward(x, params, c, &trace);
    const OracleResult oracle = oracle_attention(x, params, c);
    if (y.shape() != oracle.output.shape()) return {Status::kFail, str("shape mismatch in case ", trial)};
    worst_output = std::max(worst_output, max_abs_diff(y, oracle.output));
    const int slots = c.slots();
    for (int pos = 0; pos < n * h * w; ++pos) {
      double sum = 0.0;
      for (int s = 0; s < slots; ++s) sum += trace.weights[static_cast<std::size_t>(pos) * slots + s];
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    }
  }
  return verdict(worst_output < 1e-5 && worst_sum < 1e-6,
                 str(kCases, " cases, max abs error ", worst_output, " (< 1e-5), weight-sum deviation ",
                     worst_sum, " (< 1e-6)"));
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Worst |numeric - analytic| / max(|numeric|, |analytic|, 1e-6) over every
// entry of `target`, differentiating sum(upstream * forward()).
double worst_gradient_error(Tensor<double>& target, const Tensor<double>& analytic, const Tensor<double>& upstream,
                            const std::function<Tensor<double>()>& forward) {
  constexpr double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double saved = target[i];
    target[i] = saved + h;
    const double plus = dot(forward(), upstream);
    target[i] = saved - h;
    const double minus = dot(forward(), upstream);
    target[i] = saved;
    worst = std::max(worst, relative_error((plus - minus) / (2 * h), analytic[i], 1e-6));
  }
  return worst;
}

Outcome gradient_check() {
  std::mt19937_64 rng(202);
  constexpr int kCases = 24;
  double worst = 0.0;
  for (int trial = 0; trial < kCases; ++trial) {
    AttentionConfig c;
    c.in_channels = random_int(rng, 1, 3);
    c.out_channels = random_int(rng, 1, 3);
    c.neighborhood = 1 + 2 * random_int(rng, 0, 2);
    c.projection_kernel = trial % 3 == 2 ? 3 : 1;
    c.projection_bias = trial % 2 == 0;
    const int h = random_int(rng, 2, 6), w = random_int(rng, 2, 6);
    auto params = random_attention_params<double>(c, rng, 0.8);
    auto x = random_tensor<double>({1, c.in_channels, h, w}, rng);
    const auto up = random_tensor<double>({1, c.out_channels, h, w}, rng);
    const AttentionGradients<double> g = relative_attention_backward(x, params, c, up);
    const auto fwd = [&] { return relative_attention_forward(x, params, c); };
    worst = std::max({worst, worst_gradient_error(x, g.input, up, fwd),
                      worst_gradient_error(params.query_weights, g.params.query_weights, up, fwd),
                      worst_gradient_error(params.key_weights, g.params.key_weights, up, fwd),
                      worst_gradient_error(params.value_weights, g.params.value_weights, up, fwd)});
    if (c.projection_bias) {
      worst = std::max({worst, worst_gradient_error(params.query_bias, g.params.query_bias, up, fwd),
                        worst_gradient_error(params.key_bias, g.params.key_bias, up, fwd),
                        worst_gradient_error(params.value_bias, g.params.value_bias, up, fwd)});
    }
  }
  return verdict(worst < 1e-4, str(kCases, " float64 cases, worst relative error ", worst, " (< 1e-4)"));
}

// --- networks and training ------------------------------------------------------

Outcome architecture_contract() {
  const NetworkSpec spec = default_network_spec();
  spec.validate();
  const bool inventory = count_layers(spec.encoder, LayerKind::kConv) == 3 &&
                         count_layers(spec.encoder, LayerKind::kRelativeAttention) == 3 &&
                         count_layers(spec.decoder, LayerKind::kConvTranspose) == 3 &&
                         count_layers(spec.decoder, LayerKind::kRelativeAttention) == 2 &&
                         count_layers(spec.latent_disc, LayerKind::kLinear) == 6 &&
                         count_layers(spec.sample_disc, LayerKind::kConv) == 4 &&
                         count_layers(spec.sample_disc, LayerKind::kRelativeAttention) == 3;

  const Model model(spec, 1);
  std::mt19937_64 rng(303);
  const Tensor<float> x = random_tensor<float>({2, 1, 12, 50}, rng, 0.0, 1.0);
  const Tensor<float> z = model.encode(x);
  const Tensor<float> back = model.decode(z);
  const bool round_trip = z.shape() == std::vector<int>{2, 64} && back.shape() == x.shape();

  const std::size_t total = model.count_parameters().total();
  const bool in_range = total >= 300000 && total <= 1300000;
  return verdict(inventory && round_trip && in_range,
                 str("layer inventory ", inventory ? "ok" : "BROKEN", ", 12x50 -> ", z.shape().back(),
                     " -> 12x50 ", round_trip ? "ok" : "BROKEN", ", parameters ", total,
                     " (range [300000, 1300000], published 630000)"));
}

Outcome algorithm_smoke() {
  const auto windows = synthetic_user_windows(0, 40.0);
  TrainConfig c;
  c.seed = 3;
  c.max_steps = 200;
  const TrainResult r = train(windows, default_network_spec(), c);
  bool finite = r.log.steps.size() == 200;
  for (const LossBundle& b : r.log.steps) finite = finite && b.all_finite();
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    first += r.log.steps[i].rec / 10.0;
    last += r.log.steps[r.log.steps.size() - 10 + i].rec / 10.0;
  }
  const double drop = 1.0 - last / first;
  return verdict(finite && drop >= 0.3,
                 str("200 steps, losses ", finite ? "finite" : "NOT finite", ", L_rec ", first, " -> ", last,
                     " (drop ", 100.0 * drop, "%, need >= 30%)"));
}

// --- scoring and metrics ----------------------------------------------------------

Outcome scoring_oracle() {
  std::mt19937_64 rng(404);
  // Closed-form density of a linear decoder.
  constexpr int m = 600, n = 64;
  std::vector<double> calibration(200);
  for (double& r : calibration) r = std::abs(gaussian_vector(1, rng, 0.5)[0]) + 0.5;
  const ResidualTailDensity tail = fit_residual_density(calibration);
  double worst_density = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd a = gaussian_matrix(m, n, rng) * 0.2;
    const LinearManifold map(a);
    Eigen::VectorXd off = gaussian_vector(m, rng);
    off -= a * a.colPivHouseholderQr().solve(off);
    off *= (0.6 + 0.05 * trial) / off.norm();
    const Eigen::VectorXd x = a * gaussian_vector(n, rng, 0.3) + off;
    const LinearOracle o = linear_oracle(a, x, tail);
    for (ResidualOrigin origin : {ResidualOrigin::kReconstruction, ResidualOrigin::kOrigin}) {
      worst_density = std::max(worst_density, std::abs(score(x, map, tail, 0.0, origin).log_p - o.log_p()));
    }
  }

  double worst_pythagoras = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::MatrixXd j = gaussian_matrix(m, n, rng);
    const Eigen::VectorXd y = gaussian_vector(m, rng);
    const TangentDecomposition t = tangent_decompose(y, j);
    worst_pythagoras = std::max(
        worst_pythagoras,
        std::abs(t.parallel_coords.squaredNorm() + t.residual_norm * t.residual_norm - y.squaredNorm()));
  }

  // Central differences of the network decoder, one latent direction at a time.
  const Model model(default_network_spec(), 11);
  const NetworkManifold map(model);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  Eigen::VectorXd z(64);
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = u(rng);
  const Eigen::MatrixXd jac = decoder_jacobian(map, z);
  const auto fd_error = [&](double h) {
    double worst = 0.0;
    for (int c = 0; c < 64; ++c) {
      Eigen::VectorXd zp = z, zm = z;
      zp[c] += h;
      zm[c] -= h;
      const Eigen::VectorXd fd = (map.linearize(zp).value - map.linearize(zm).value) / (2 * h);
      worst = std::max(worst, (fd - jac.col(c)).norm() / std::max(fd.norm(), 1e-12));
    }
    return worst;
  };
  const double worst_jacobian = fd_error(1e-5);

  return verdict(worst_density < 1e-6 && worst_pythagoras < 1e-8 && worst_jacobian < 1e-3,
                 str("closed-form |dlog p| ", worst_density, " (< 1e-6), Pythagoras ", worst_pythagoras,
                     " (< 1e-8, 100 cases), decoder Jacobian rel err ", worst_jacobian,
                     " at step 1e-5 (< 1e-3; step 1e-4 gives ", fd_error(1e-4), ")"));
}

Outcome metric_oracle() {
  std::mt19937_64 rng(505);
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::vector<LabeledScore> scores = random_labeled_scores(rng);
    const double threshold = scores[static_cast<std::size_t>(trial) % scores.size()].score;
    const MetricReport got = compute_metrics(scores, threshold);
    const OracleMetrics want = oracle_metrics(scores, threshold);
    worst = std::max({worst, std::abs(got.far - want.far), std::abs(got.frr - want.frr),
                      std::abs(got.eer - want.eer), std::abs(got.auroc - want.auroc)});
  }
  std::vector<LabeledScore> separable;
  for (double s : {5.0, 6.0, 7.5}) separable.push_back({s, true, {}});
  for (double s : {-1.0, 0.0, 2.0, 3.0}) separable.push_back({s, false, {}});
  const MetricReport sep = compute_metrics(separable, 4.0);
  const bool exact = sep.eer == 0.0 && sep.auroc == 1.0;
  return verdict(worst < 1e-9 && exact, str("500 sets, worst deviation ", worst, " (< 1e-9); separable EER ",
                                            sep.eer, " AUROC ", sep.auroc));
}

// --- desk-scale runs ----------------------------------------------------------------

// Shared by the end-to-end and random-attack criteria.
std::optional<UserEvaluation> g_desk_run;

Outcome end_to_end() {
  const auto start = std::chrono::steady_clock::now();
  SyntheticFamilySpec family;  // 6 users, disjoint bands, 2 x 200 s sessions
  const std::vector<UserRecordings> users = generate_family(family);
  EvaluationConfig config;
  config.architecture.base_channels = 16;
  config.train.max_steps = 1200;
  config.train.seed = 1;
  config.split_seed = 1;

  const std::vector<SensorWindow> legit = extract_windows(users[0].recordings, config.preprocess).windows;
  std::vector<SensorWindow> impostors;
  bool sizes_ok = legit.size() == 800;
  for (std::size_t k = 1; k < users.size(); ++k) {
    const auto w = extract_windows(users[k].recordings, config.preprocess).windows;
    sizes_ok = sizes_ok && w.size() == 800;
    impostors.insert(impostors.end(), w.begin(), w.end());
  }
  g_desk_run = evaluate_user(legit, impostors, config);
  const double elapsed = seconds_since(start);
  const MetricReport& m = g_desk_run->metrics;
  return verdict(sizes_ok && m.eer <= 0.10 && m.auroc >= 0.90 && elapsed <= 600.0,
                 str("user0 vs users 1-5 (", legit.size(), " legit, ", impostors.size(), " impostor windows): EER ",
                     100.0 * m.eer, "% (<= 10%), AUROC ", m.auroc, " (>= 0.90), FAR ", 100.0 * m.far, "% FRR ",
                     100.0 * m.frr, "%, ", elapsed, " s (<= 600 s)"));
}

Outcome random_attack() {
  if (!g_desk_run) return {Status::kFail, "end-to-end model unavailable"};
  SyntheticFamilySpec family;
  family.family = "attacker";
  family.users = 5;
  family.sessions = 1;
  family.duration_s = 60.0;
  family.seed = 99;
  family.user_prefix = "attacker";
  AttackSource source{"attacker_family", {}};
  for (const UserRecordings& u : generate_family(family)) {
    source.recordings.insert(source.recordings.end(), u.recordings.begin(), u.recordings.end());
  }
  EvaluationConfig config;
  config.split_seed = 1;
  const std::vector<AttackSource> sources{source};
  const AttackReport report = random_attack_eval(g_desk_run->user, g_desk_run->test_legit_raw, sources, config).at(0);
  const double tpr = 1.0 - report.metrics.frr;
  return verdict(report.metrics.far <= 0.05 && tpr >= 0.90,
                 str(report.attacker_windows, " attacker windows: FAR at tau ", 100.0 * report.metrics.far,
                     "% (<= 5%), held-out TPR ", tpr, " (>= 0.90), AUROC ", report.metrics.auroc));
}

Outcome window_trend() {
  std::vector<double> short_eer, long_eer;
  std::ostringstream per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SyntheticFamilySpec family;
    family.duration_s = 260.0;  // 1.0 s windows still leave 50 for calibration
    family.seed = seed;
    const std::vector<UserRecordings> users = generate_family(family);
    std::vector<SensorRecording> others;
    for (std::size_t k = 1; k < users.size(); ++k) {
      others.insert(others.end(), users[k].recordings.begin(), users[k].recordings.end());
    }
    EvaluationConfig config;
    config.architecture.base_channels = 16;
    config.train.max_steps = 300;
    config.train.seed = seed;
    config.split_seed = seed;
    config.max_impostor_windows = 150;
    const std::vector<double> sizes{0.25, 1.0};
    const std::vector<SweepRow> rows = window_size_sweep(users[0].recordings, others, sizes, config);
    short_eer.push_back(rows.at(0).metrics.eer);
    long_eer.push_back(rows.at(1).metrics.eer);
    per_seed << (seed == 1 ? "" : ", ") << std::setprecision(3) << 100.0 * short_eer.back() << "/"
             << 100.0 * long_eer.back();
  }
  const double a = median(short_eer), b = median(long_eer);
  return verdict(a >= b, str("median EER 0.25 s ", 100.0 * a, "% >= 1.0 s ", 100.0 * b,
                             "% (per seed 0.25/1.0: ", per_seed.str(), ")"));
}

// --- preprocessing and determinism ------------------------------------------------------

Outcome preprocessing_exactness() {
  std::vector<std::string> failures;
  const auto expect = [&](bool ok, const char* what) {
    if (!ok) failures.emplace_back(what);
  };

  expect(add_magnitude(3.0, 4.0, 0.0)[3] == 5.0, "magnitude 3-4-5");
  expect(add_magnitude(0.0, 0.0, 0.0)[3] == 0.0, "magnitude zero");
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng), y = u(rng), z = u(rng);
    const double m = add_magnitude(x, y, z)[3];
    if (std::abs(m * m - (x * x + y * y + z * z)) >= 1e-12 * (1.0 + m * m)) {
      failures.emplace_back("magnitude identity");
      break;
    }
  }

  ChannelSeries train;
  train.channels.assign(kWindowChannels, {0.0, 5.0, 10.0});
  train.channels[7] = {2.0, 2.0, 2.0};
  const std::vector<ChannelSeries> training{train};
  const NormalizationStats stats = fit_normalization(training);
  const ChannelSeries normalized = apply_normalization(train, stats);
  expect(normalized.channels[0] == std::vector<double>{0.0, 0.5, 1.0}, "normalize {0,5,10}");
  expect(stats.degenerate(7) && normalized.channels[7] == std::vector<double>{0.5, 0.5, 0.5}, "constant channel");
  ChannelSeries test = train;
  test.channels[0] = {11.0, -3.0, 7.5};
  expect(apply_normalization(test, stats).channels[0] == std::vector<double>{1.0, 0.0, 0.75}, "clipping");

  const auto ramp = [](std::size_t length) {
    ChannelSeries s;
    s.channels.assign(kWindowChannels, std::vector<double>(length));
    for (int c = 0; c < kWindowChannels; ++c) {
      for (std::size_t i = 0; i < length; ++i) s.channels[c][i] = c * 10000.0 + static_cast<double>(i);
    }
    return s;
  };
  const Windowing w = window(ramp(1230), 0.5);
  expect(w.windows.size() == 24 && w.dropped == 30, "12.3 s -> 24 windows");
  const Windowing one = window(ramp(50), 0.5);
  expect(one.windows.size() == 1 && one.dropped == 0, "0.5 s -> 1 window");
  const ChannelSeries long_ramp = ramp(1000);
  const Windowing all = window(long_ramp, 0.5);
  bool lossless = all.windows.size() == 20;
  for (std::size_t k = 0; lossless && k < all.windows.size(); ++k) {
    for (int c = 0; c < kWindowChannels; ++c) {
      for (int t = 0; t < 50; ++t) lossless = lossless && all.windows[k].at(c, t) == long_ramp.channels[c][k * 50 + t];
    }
  }
  expect(lossless, "windowing round trip");

  const auto recording = [](std::size_t count, double period_ms, const std::function<double(double)>& value) {
    SensorRecording r;
    r.user_id = "u";
    r.session_id = "s";
    for (SensorStream& stream : r.streams) {
      for (std::size_t i = 0; i < count; ++i) {
        const double t = static_cast<double>(i) * period_ms;
        stream.push_back({t, value(t), value(t + 1.0), value(t + 2.0)});
      }
    }
    return r;
  };
  const SensorRecording uniform = recording(300, 10.0, [](double t) { return std::cos(t / 77.0); });
  const ChannelSeries same = resample(uniform);
  bool identity = same.length() == 300;
  for (std::size_t i = 0; identity && i < same.length(); ++i) identity = same.channels[0][i] == uniform.streams[0][i].x;
  expect(identity, "100 Hz identity");
  const ChannelSeries linear = resample(recording(100, 20.0, [](double t) { return t / 1000.0; }));
  bool stays_linear = linear.length() == 200;
  for (std::size_t i = 0; stays_linear && i < linear.length(); ++i) {
    stays_linear = std::abs(linear.channels[0][i] - linear.time_at(i) / 1000.0) <= 1e-14 * (1.0 + linear.time_at(i) / 1000.0);
  }
  expect(stays_linear, "50 Hz ramp");
  constexpr double rate = 87.0, f = 2.0;
  const auto wave = [](double t) { return std::sin(2.0 * std::numbers::pi * f * t / 1000.0); };
  const ChannelSeries sine = resample(recording(261, 1000.0 / rate, wave));
  double worst = 0.0;
  for (std::size_t i = 0; i < sine.length(); ++i) worst = std::max(worst, std::abs(sine.channels[0][i] - wave(sine.time_at(i))));
  expect(sine.length() == 300 && worst < std::pow(2.0 * std::numbers::pi * f / rate, 2) / 8.0, "87 Hz bound");

  std::string detail = "magnitude, normalization, windowing (1230 samples -> " + std::to_string(w.windows.size()) +
                       " windows) and resampling examples";
  for (const std::string& f : failures) detail += "; failed: " + f;
  return verdict(failures.empty(), detail);
}

Outcome determinism() {
  SyntheticFamilySpec family;
  family.users = 1;
  family.sessions = 1;
  family.duration_s = 80.0;
  const std::vector<SensorWindow> windows = extract_windows(generate_family(family)[0].recordings).windows;
  const std::span<const SensorWindow> all(windows);
  EvaluationConfig config;
  config.train.batch_size = 16;
  config.train.max_steps = 20;
  config.train.seed = 77;
  const auto bundle_bytes = [&] {
    return serialize_bundle(make_bundle(fit_user(all.subspan(0, 90), all.subspan(90, 70), config), config));
  };
  const std::string a = bundle_bytes();
  const std::string b = bundle_bytes();
  return verdict(a == b, str("two seeded runs, bundles of ", a.size(), " and ", b.size(), " bytes ",
                             a == b ? "identical" : "DIFFER"));
}

Outcome hmog_subset() {
  const char* manifest = std::getenv("RAOC_HMOG_MANIFEST");
  if (manifest == nullptr || !std::filesystem::exists(manifest)) {
    return {Status::kSkip, "set RAOC_HMOG_MANIFEST to an HMOG dataset manifest to run"};
  }
  const LoadedDataset dataset = load_dataset(load_manifest(manifest));
  std::vector<std::string> ids;
  for (const UserRecordings& u : dataset.users) ids.push_back(u.user_id);
  const std::vector<std::string> subset = select_users(ids, 10, 0);
  const DatasetEvaluation result = evaluate_dataset(dataset, EvaluationConfig{}, subset, false);
  return verdict(result.summary.mean_eer <= 0.05,
                 str(subset.size(), " users: mean EER ", 100.0 * result.summary.mean_eer, "% (<= 5%), mean AUROC ",
                     result.summary.mean_auroc));
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"attention oracle", attention_oracle},
      {"attention gradient check", gradient_check},
      {"architecture contract", architecture_contract},
      {"adversarial training smoke", algorithm_smoke},
      {"scoring oracle", scoring_oracle},
      {"metric oracle", metric_oracle},
      {"end-to-end desk run", end_to_end},
      {"random-attack miniature", random_attack},
      {"window-size trend", window_trend},
      {"preprocessing exactness", preprocessing_exactness},
      {"determinism", determinism},
      {"HMOG subset (optional)", hmog_subset},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = run();
    } catch (const std::exception& e) {
      outcome = {Status::kFail, std::string("threw: ") + e.what()};
    }
    const char* tag = outcome.status == Status::kPass ? "PASS" : (outcome.status == Status::kFail ? "FAIL" : "SKIP");
    failed += outcome.status == Status::kFail ? 1 : 0;
    std::cout << tag << "  " << name << " [" << std::fixed << std::setprecision(1) << seconds_since(start) << " s]  "
              << std::defaultfloat << outcome.detail << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria met" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
