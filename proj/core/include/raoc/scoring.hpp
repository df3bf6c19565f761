#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "raoc/networks.hpp"
#include "raoc/preprocessing.hpp"

namespace raoc {

// The pair of maps the density score needs: an encoder onto latent codes and
// a differentiable decoder back onto flattened windows.
class ManifoldMap {
 public:
  struct Linearization {
    Eigen::VectorXd value;     // f(z), length output_dim
    Eigen::MatrixXd jacobian;  // output_dim x latent_dim
  };

  virtual ~ManifoldMap() = default;
  virtual int latent_dim() const = 0;
  virtual int output_dim() const = 0;
  virtual Eigen::VectorXd encode(const Eigen::VectorXd& x) const = 0;
  // Column i holds the code of column i of xs.
  virtual Eigen::MatrixXd encode_batch(const Eigen::MatrixXd& xs) const;
  virtual Linearization linearize(const Eigen::VectorXd& z) const = 0;
};

// f(z) = A z + b with a least-squares encoder.
class LinearManifold final : public ManifoldMap {
 public:
  explicit LinearManifold(Eigen::MatrixXd a, Eigen::VectorXd b = {});

  int latent_dim() const override { return static_cast<int>(a_.cols()); }
  int output_dim() const override { return static_cast<int>(a_.rows()); }
  Eigen::VectorXd encode(const Eigen::VectorXd& x) const override;
  Linearization linearize(const Eigen::VectorXd& z) const override;

 private:
  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
  Eigen::MatrixXd pseudo_inverse_;
};

// The trained encoder (float, inference mode) and a float64 copy of the
// decoder whose Jacobian comes from one batched forward-mode pass.
class NetworkManifold final : public ManifoldMap {
 public:
  explicit NetworkManifold(const Model& model);

  int latent_dim() const override { return latent_dim_; }
  int output_dim() const override { return height_ * width_; }
  Eigen::VectorXd encode(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd encode_batch(const Eigen::MatrixXd& xs) const override;
  Linearization linearize(const Eigen::VectorXd& z) const override;

 private:
  const Model* model_;
  Network<double> decoder_;
  int latent_dim_;
  int height_;
  int width_;
};

// Row-major flattening of a window (channel-major, then time).
Eigen::VectorXd flatten(const SensorWindow& window);

Eigen::MatrixXd decoder_jacobian(const ManifoldMap& map, const Eigen::VectorXd& latent);

struct TangentDecomposition {
  Eigen::VectorXd parallel_coords;   // U^T y
  double residual_norm = 0.0;        // |y - U U^T y|
  Eigen::VectorXd singular_values;   // descending
};

// Thin SVD of the Jacobian and the split of y into its component in the
// column space and the orthogonal remainder.
TangentDecomposition tangent_decompose(const Eigen::VectorXd& y, const Eigen::MatrixXd& jacobian);

struct ResidualTailDensity {
  std::vector<double> bin_edges;
  std::vector<double> bin_log_densities;
  double floor = 1e-12;
  std::size_t sample_count = 0;
  // Off when the sample occupies a single bin; lookups are then piecewise
  // constant so the occupied bin reports its own density.
  bool interpolate = true;

  bool fitted() const { return !bin_log_densities.empty(); }
  double density(double r) const;
  double log_density(double r) const;
  bool operator==(const ResidualTailDensity&) const = default;
};

inline constexpr std::size_t kMinTailSamples = 50;

ResidualTailDensity fit_residual_density(std::span<const double> residual_norms, int bins = 100,
                                         double floor = 1e-12);

enum class Verdict { kAccept, kReject };
std::string to_string(Verdict verdict);

// Which point the tangent decomposition is taken around. kReconstruction
// decomposes x - f(z); kOrigin decomposes x itself. They agree for a
// bias-free linear decoder.
enum class ResidualOrigin { kReconstruction, kOrigin };
std::string to_string(ResidualOrigin origin);
ResidualOrigin residual_origin_from_string(const std::string& name);

inline constexpr double kMinSingularValue = 1e-8;
inline constexpr double kMinResidualNorm = 1e-12;

struct ScoreBreakdown {
  double log_p = 0.0;
  double log_det_term = 0.0;
  double log_prior_term = 0.0;
  double log_perp_term = 0.0;
  double residual_norm = 0.0;
  double parallel_norm = 0.0;
  double decomposed_norm = 0.0;  // norm of the vector that was decomposed
  std::vector<double> singular_values;
  std::vector<double> latent;
  int clamped_singular_values = 0;
  Verdict verdict = Verdict::kReject;
  double threshold = 0.0;
};

// Log-density terms for a fixed decomposition.
double log_det_term(const Eigen::VectorXd& singular_values, int* clamped = nullptr);
double log_prior_term(int latent_dim);
double log_perp_term(double residual_norm, int ambient_dim, int latent_dim,
                     const ResidualTailDensity& tail);

ScoreBreakdown score(const Eigen::VectorXd& x, const ManifoldMap& map,
                     const ResidualTailDensity& tail, double tau,
                     ResidualOrigin origin = ResidualOrigin::kReconstruction);
// Same, with the latent code supplied instead of computed.
ScoreBreakdown score_at(const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                        const ManifoldMap& map, const ResidualTailDensity& tail, double tau,
                        ResidualOrigin origin = ResidualOrigin::kReconstruction);

std::vector<ScoreBreakdown> score_windows(std::span<const SensorWindow> windows,
                                          const ManifoldMap& map, const ResidualTailDensity& tail,
                                          double tau,
                                          ResidualOrigin origin = ResidualOrigin::kReconstruction);

// Residual norms used to fit the tail density.
std::vector<double> residual_norms(std::span<const SensorWindow> windows, const ManifoldMap& map,
                                   ResidualOrigin origin = ResidualOrigin::kReconstruction);

inline constexpr std::size_t kMinCalibrationScores = 20;

// Lower empirical (1 - target_tpr)-quantile of the legitimate scores, so at
// least target_tpr of them satisfy score >= tau.
double calibrate_threshold(std::span<const double> legit_scores, double target_tpr = 0.97);

struct Calibration {
  ResidualTailDensity tail;
  double tau = 0.0;
  std::vector<ScoreBreakdown> scores;  // calibration windows under the final tail
};

// Fits the tail on the calibration windows, scores them, and picks tau.
Calibration calibrate(std::span<const SensorWindow> windows, const ManifoldMap& map,
                      double target_tpr = 0.97,
                      ResidualOrigin origin = ResidualOrigin::kReconstruction);

}  // namespace raoc
