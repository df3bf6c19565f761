#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "../support/scoring_oracle.hpp"
#include "raoc/errors.hpp"
#include "raoc/networks.hpp"
#include "raoc/scoring.hpp"

using namespace raoc;
using raoc::testing::gaussian_matrix;
using raoc::testing::gaussian_vector;
using raoc::testing::linear_oracle;

namespace {

ResidualTailDensity flat_tail(double upper, int bins = 10) {
  ResidualTailDensity t;
  for (int i = 0; i <= bins; ++i) t.bin_edges.push_back(upper * i / bins);
  t.bin_log_densities.assign(static_cast<std::size_t>(bins), -std::log(upper));
  t.sample_count = 100;
  return t;
}

}  // namespace

TEST_CASE("linear decoder Jacobian is the matrix itself") {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd a = gaussian_matrix(30, 4, rng);
  const LinearManifold map(a);
  const Eigen::MatrixXd j = decoder_jacobian(map, gaussian_vector(4, rng));
  CHECK(j == a);
}

TEST_CASE("score matches the closed-form density of a linear decoder") {
  std::mt19937_64 rng(2);
  constexpr int m = 600, n = 64;
  std::vector<double> calibration(200);
  for (double& r : calibration) r = std::abs(gaussian_vector(1, rng, 0.5)[0]) + 0.5;
  const ResidualTailDensity tail = fit_residual_density(calibration);

  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd a = gaussian_matrix(m, n, rng) * 0.2;
    const LinearManifold map(a);
    // A point near the column space whose residual lands inside the tail.
    Eigen::VectorXd off = gaussian_vector(m, rng);
    off -= a * a.colPivHouseholderQr().solve(off);
    off *= (0.6 + 0.05 * trial) / off.norm();
    const Eigen::VectorXd x = a * gaussian_vector(n, rng, 0.3) + off;

    const raoc::testing::LinearOracle o = linear_oracle(a, x, tail);
    for (ResidualOrigin origin : {ResidualOrigin::kReconstruction, ResidualOrigin::kOrigin}) {
      const ScoreBreakdown s = score(x, map, tail, 0.0, origin);
      worst = std::max({worst, std::abs(s.log_p - o.log_p()), std::abs(s.log_det_term - o.log_det),
                        std::abs(s.log_perp_term - o.log_perp)});
      CHECK(s.log_prior_term == doctest::Approx(o.log_prior).epsilon(1e-15));
      CHECK(std::abs(s.residual_norm - o.residual_norm) < 1e-9);
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("orthonormal decoder with an in-span window has a zero determinant term") {
  std::mt19937_64 rng(3);
  constexpr int m = 100, n = 5;
  const Eigen::MatrixXd q = gaussian_matrix(m, n, rng).householderQr().householderQ() *
                            Eigen::MatrixXd::Identity(m, n);
  const LinearManifold map(q);
  // Residuals around delta = 0.01 so the in-span point sits in the first bin.
  std::vector<double> residuals(100);
  for (std::size_t i = 0; i < residuals.size(); ++i) residuals[i] = 0.01 * (1.0 + 0.001 * i);
  const ResidualTailDensity tail = fit_residual_density(residuals);
  const Eigen::VectorXd x = q * gaussian_vector(n, rng, 0.3);
  const ScoreBreakdown s = score(x, map, tail, 0.0, ResidualOrigin::kOrigin);
  CHECK(std::abs(s.log_det_term) < 1e-12);
  CHECK(s.residual_norm < 1e-9);
  // The residual floor caps the radial term; the rest is prior plus tail.
  const double k = m - n;
  const double expected = -n * std::log(2.0) + std::lgamma(k / 2) - std::log(2.0) -
                          (k / 2) * std::log(std::numbers::pi) -
                          k * std::log(std::max(s.residual_norm, kMinResidualNorm)) +
                          std::log(tail.density(s.residual_norm));
  CHECK(s.log_p == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("tangent decomposition") {
  std::mt19937_64 rng(4);
  SUBCASE("Pythagoras on random Jacobians") {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::MatrixXd j = gaussian_matrix(600, 64, rng);
      const Eigen::VectorXd y = gaussian_vector(600, rng);
      const TangentDecomposition t = tangent_decompose(y, j);
      const double lhs = t.parallel_coords.squaredNorm() + t.residual_norm * t.residual_norm;
      worst = std::max(worst, std::abs(lhs - y.squaredNorm()));
      CHECK(std::is_sorted(t.singular_values.begin(), t.singular_values.end(), std::greater<>()));
      CHECK(t.singular_values.minCoeff() >= 0.0);
    }
    CHECK(worst < 1e-8);
  }
  SUBCASE("vector in the column space") {
    const Eigen::MatrixXd j = gaussian_matrix(600, 64, rng);
    const TangentDecomposition t = tangent_decompose(j * gaussian_vector(64, rng), j);
    CHECK(t.residual_norm < 1e-9);
  }
  SUBCASE("vector orthogonal to orthonormal columns") {
    const Eigen::MatrixXd j = Eigen::MatrixXd::Identity(20, 6);
    const TangentDecomposition t = tangent_decompose(Eigen::VectorXd::Unit(20, 6), j);
    CHECK(t.parallel_coords.norm() == 0.0);
    CHECK(t.residual_norm == 1.0);
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(tangent_decompose(Eigen::VectorXd::Zero(4), Eigen::MatrixXd::Zero(4, 4)),
                    ConfigError);
    CHECK_THROWS_AS(tangent_decompose(Eigen::VectorXd::Zero(5), Eigen::MatrixXd::Zero(6, 2)),
                    ConfigError);
  }
}

TEST_CASE("residual tail density") {
  SUBCASE("half-normal sample at the median") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> draws(1000);
    for (double& d : draws) d = std::abs(n(rng));
    const ResidualTailDensity tail = fit_residual_density(draws);
    const double median = 0.6744897501960817;
    const double truth = 2.0 * std::exp(-0.5 * median * median) / std::sqrt(2.0 * std::numbers::pi);
    const double fitted = tail.density(median);
    MESSAGE("half-normal density at the median: fitted " << fitted << ", true " << truth);
    CHECK(std::abs(fitted - truth) / truth < 0.15);
  }
  SUBCASE("bins integrate to one and cover 1.5 times the maximum") {
    std::vector<double> draws(300);
    for (std::size_t i = 0; i < draws.size(); ++i) draws[i] = std::sqrt(double(i));
    const ResidualTailDensity tail = fit_residual_density(draws);
    CHECK(tail.bin_edges.front() == 0.0);
    CHECK(tail.bin_edges.back() == doctest::Approx(1.5 * std::sqrt(299.0)).epsilon(1e-15));
    double mass = 0.0;
    for (std::size_t b = 0; b < tail.bin_log_densities.size(); ++b) {
      mass += std::exp(tail.bin_log_densities[b]) * (tail.bin_edges[b + 1] - tail.bin_edges[b]);
    }
    CHECK(std::abs(mass - 1.0) < 1e-6);
    CHECK(tail.sample_count == 300);
  }
  SUBCASE("identical residuals") {
    const std::vector<double> same(60, 2.0);
    const ResidualTailDensity tail = fit_residual_density(same);
    const double top = *std::max_element(tail.bin_log_densities.begin(), tail.bin_log_densities.end());
    CHECK(tail.log_density(2.0) == top);
    CHECK(std::count(tail.bin_log_densities.begin(), tail.bin_log_densities.end(), top) == 1);
  }
  SUBCASE("floor beyond the support") {
    const std::vector<double> draws(80, 1.0);
    const ResidualTailDensity tail = fit_residual_density(draws);
    CHECK(tail.density(1e6) == 1e-12);
    CHECK(tail.density(-1.0) == 1e-12);
  }
  SUBCASE("too few or invalid samples") {
    CHECK_THROWS_AS(fit_residual_density(std::vector<double>(49, 1.0)), CalibrationError);
    std::vector<double> bad(60, 1.0);
    bad[3] = -1.0;
    CHECK_THROWS_AS(fit_residual_density(bad), DataError);
    CHECK_THROWS_AS(ResidualTailDensity{}.density(1.0), CalibrationError);
  }
}

TEST_CASE("threshold calibration") {
  std::vector<double> scores(100);
  std::iota(scores.begin(), scores.end(), 1.0);
  CHECK(calibrate_threshold(scores, 0.97) == 3.0);
  CHECK(std::count_if(scores.begin(), scores.end(), [](double s) { return s >= 3.0; }) == 98);
  std::shuffle(scores.begin(), scores.end(), std::mt19937_64(6));
  CHECK(calibrate_threshold(scores, 1.0) == 1.0);
  CHECK(calibrate_threshold(std::vector<double>(25, -4.5), 0.97) == -4.5);
  CHECK_THROWS_AS(calibrate_threshold(std::vector<double>(19, 1.0)), CalibrationError);
  CHECK_THROWS_AS(calibrate_threshold(scores, 0.0), ConfigError);

  // At least target_tpr of the scores always clear the threshold.
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int size = 20 + trial;
    std::vector<double> s(static_cast<std::size_t>(size));
    for (double& v : s) v = std::round(gaussian_vector(1, rng, 10.0)[0]);
    const double target = 0.5 + 0.5 * (trial % 50) / 49.0;
    const double tau = calibrate_threshold(s, target);
    const auto kept = std::count_if(s.begin(), s.end(), [&](double v) { return v >= tau; });
    CHECK(static_cast<double>(kept) >= target * size - 1e-9);
  }
}

TEST_CASE("score terms add up and the verdict depends only on log_p and tau") {
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd a = gaussian_matrix(120, 8, rng);
  const LinearManifold map(a);
  const ResidualTailDensity tail = flat_tail(20.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd x = gaussian_vector(120, rng);
    const ScoreBreakdown s = score(x, map, tail, 0.0);
    CHECK(std::abs(s.log_p - (s.log_det_term + s.log_prior_term + s.log_perp_term)) <= 1e-12);
    CHECK(s.residual_norm >= 0.0);
    CHECK(score(x, map, tail, s.log_p).verdict == Verdict::kAccept);
    CHECK(score(x, map, tail, std::nextafter(s.log_p, INFINITY)).verdict == Verdict::kReject);
    // Sweeping tau upwards flips the verdict exactly once.
    int flips = 0;
    Verdict last = Verdict::kAccept;
    for (int step = -20; step <= 20; ++step) {
      const Verdict v = score(x, map, tail, s.log_p + step * 0.5).verdict;
      flips += v != last ? 1 : 0;
      last = v;
    }
    CHECK(flips == 1);
  }
}

TEST_CASE("identical latent and residual give identical scores") {
  std::mt19937_64 rng(9);
  const Eigen::MatrixXd q = gaussian_matrix(50, 4, rng).householderQr().householderQ() *
                            Eigen::MatrixXd::Identity(50, 4);
  const LinearManifold map(q);
  const ResidualTailDensity tail = flat_tail(10.0);
  Eigen::VectorXd u = gaussian_vector(50, rng), v = gaussian_vector(50, rng);
  u -= q * (q.transpose() * u);
  v -= q * (q.transpose() * v);
  v -= u * (u.dot(v) / u.squaredNorm());
  v *= u.norm() / v.norm();
  const Eigen::VectorXd base = q * gaussian_vector(4, rng);
  const ScoreBreakdown a = score(base + u, map, tail, 0.0);
  const ScoreBreakdown b = score(base + v, map, tail, 0.0);
  CHECK(a.residual_norm == doctest::Approx(b.residual_norm).epsilon(1e-14));
  CHECK(a.log_p == doctest::Approx(b.log_p).epsilon(1e-12));
  const ScoreBreakdown again = score(base + u, map, tail, 0.0);
  CHECK(again.log_p == a.log_p);
}

TEST_CASE("radial term falls as the residual grows under a flat tail") {
  const ResidualTailDensity tail = flat_tail(10.0);
  double previous = log_perp_term(0.05, 600, 64, tail);
  for (int i = 2; i <= 199; ++i) {
    const double current = log_perp_term(0.05 * i, 600, 64, tail);
    CHECK(current < previous);
    previous = current;
  }
}

TEST_CASE("clamps for degenerate decompositions") {
  int clamped = 0;
  Eigen::VectorXd s(3);
  s << 2.0, 1e-12, 0.0;
  CHECK(log_det_term(s, &clamped) == doctest::Approx(-std::log(2.0) - 2 * std::log(kMinSingularValue)));
  CHECK(clamped == 2);
  const ResidualTailDensity tail = flat_tail(1.0);
  CHECK(std::isfinite(log_perp_term(0.0, 10, 2, tail)));
  CHECK(log_perp_term(0.0, 10, 2, tail) == log_perp_term(kMinResidualNorm, 10, 2, tail));
  CHECK_THROWS_AS(score(Eigen::VectorXd::Zero(10), LinearManifold(Eigen::MatrixXd::Identity(10, 2)),
                        ResidualTailDensity{}, 0.0),
                  CalibrationError);
}

TEST_CASE("network decoder Jacobian matches finite differences") {
  std::mt19937_64 rng(10);
  const Model model(default_network_spec(), 11);
  const NetworkManifold map(model);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  Eigen::VectorXd z(64);
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = u(rng);
  const Eigen::MatrixXd j = decoder_jacobian(map, z);
  REQUIRE(j.rows() == 600);
  REQUIRE(j.cols() == 64);
  CHECK(decoder_jacobian(map, z) == j);

  // Leaky-ReLU kinks sit within 1e-4 of a few pre-activations at a random
  // latent, so the central difference uses a step small enough not to
  // straddle them.
  const auto worst_error = [&](double h) {
    double worst = 0.0;
    for (int c = 0; c < 64; ++c) {
      Eigen::VectorXd zp = z, zm = z;
      zp[c] += h;
      zm[c] -= h;
      const Eigen::VectorXd fd = (map.linearize(zp).value - map.linearize(zm).value) / (2 * h);
      worst = std::max(worst, (fd - j.col(c)).norm() / std::max(fd.norm(), 1e-12));
    }
    return worst;
  };
  const double worst = worst_error(1e-5);
  MESSAGE("worst column relative error " << worst << " (step 1e-4: " << worst_error(1e-4) << ")");
  CHECK(worst < 1e-3);
}
