#pragma once

// Brute-force metrics: every candidate threshold is evaluated by recounting
// all scores, and the AUROC is the Mann-Whitney pair statistic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "raoc/evaluation.hpp"

namespace raoc::testing {

struct OracleMetrics {
  double far = 0.0;
  double frr = 0.0;
  double eer = 0.0;
  double auroc = 0.0;
};

struct OracleRates {
  double far;
  double frr;
};

inline OracleRates oracle_rates(std::span<const LabeledScore> scores, double threshold) {
  double legit = 0, impostor = 0, false_accepts = 0, false_rejects = 0;
  for (const LabeledScore& s : scores) {
    const bool accept = s.score >= threshold;
    if (s.is_legitimate) {
      legit += 1;
      false_rejects += accept ? 0 : 1;
    } else {
      impostor += 1;
      false_accepts += accept ? 1 : 0;
    }
  }
  return {false_accepts / impostor, false_rejects / legit};
}

inline OracleMetrics oracle_metrics(std::span<const LabeledScore> scores, double threshold) {
  OracleMetrics m;
  const OracleRates op = oracle_rates(scores, threshold);
  m.far = op.far;
  m.frr = op.frr;

  double pairs = 0, wins = 0;
  for (const LabeledScore& a : scores) {
    if (!a.is_legitimate) continue;
    for (const LabeledScore& b : scores) {
      if (b.is_legitimate) continue;
      pairs += 1;
      wins += a.score > b.score ? 1.0 : (a.score == b.score ? 0.5 : 0.0);
    }
  }
  m.auroc = wins / pairs;

  // Candidate thresholds: accept-nothing, then every distinct score downwards.
  std::vector<double> thresholds{std::numeric_limits<double>::infinity()};
  for (const LabeledScore& s : scores) thresholds.push_back(s.score);
  std::sort(thresholds.begin() + 1, thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  OracleRates previous{0.0, 1.0};
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const OracleRates r = oracle_rates(scores, thresholds[i]);
    const double gap = r.far - r.frr;
    if (gap < 0.0) {
      previous = r;
      continue;
    }
    if (gap == 0.0 || i == 0) {
      m.eer = r.far;
    } else {
      // FAR and FRR are both linear in the interpolation parameter, so the
      // crossing solves one linear equation.
      const double g0 = previous.far - previous.frr;
      const double t = g0 / (g0 - gap);
      m.eer = previous.far + t * (r.far - previous.far);
    }
    break;
  }
  return m;
}

// 2 to 200 scores with both labels present; half of the sets are rounded to
// a coarse grid so that ties occur.
inline std::vector<LabeledScore> random_labeled_scores(std::mt19937_64& rng) {
  const int n = std::uniform_int_distribution<int>(2, 200)(rng);
  const bool round = std::bernoulli_distribution(0.5)(rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<LabeledScore> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const bool legit = i == 0 ? true : (i == 1 ? false : std::bernoulli_distribution(0.5)(rng));
    double s = noise(rng) + (legit ? 1.0 : 0.0);
    if (round) s = std::round(s * 4.0) / 4.0;
    out[static_cast<std::size_t>(i)] = {s, legit, {}};
  }
  return out;
}

}  // namespace raoc::testing
