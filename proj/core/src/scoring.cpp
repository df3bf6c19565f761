#include "raoc/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/SVD>

#include "raoc/errors.hpp"

namespace raoc {

Eigen::MatrixXd ManifoldMap::encode_batch(const Eigen::MatrixXd& xs) const {
  Eigen::MatrixXd out(latent_dim(), xs.cols());
  for (Eigen::Index i = 0; i < xs.cols(); ++i) out.col(i) = encode(xs.col(i));
  return out;
}

// --- LinearManifold ---------------------------------------------------------

LinearManifold::LinearManifold(Eigen::MatrixXd a, Eigen::VectorXd b)
    : a_(std::move(a)), b_(std::move(b)) {
  if (a_.rows() <= a_.cols() || a_.cols() < 1) {
    throw ConfigError("linear manifold needs more rows than columns");
  }
  if (b_.size() == 0) b_ = Eigen::VectorXd::Zero(a_.rows());
  if (b_.size() != a_.rows()) throw ConfigError("linear manifold offset has the wrong length");
  pseudo_inverse_ = a_.completeOrthogonalDecomposition().pseudoInverse();
}

Eigen::VectorXd LinearManifold::encode(const Eigen::VectorXd& x) const {
  return pseudo_inverse_ * (x - b_);
}

ManifoldMap::Linearization LinearManifold::linearize(const Eigen::VectorXd& z) const {
  if (z.size() != a_.cols()) throw ConfigError("latent has the wrong length");
  return {a_ * z + b_, a_};
}

// --- NetworkManifold --------------------------------------------------------

NetworkManifold::NetworkManifold(const Model& model)
    : model_(&model),
      decoder_(model.decoder().cast<double>()),
      latent_dim_(model.spec().latent_dim),
      height_(model.spec().input_height),
      width_(model.spec().input_width) {}

Eigen::VectorXd NetworkManifold::encode(const Eigen::VectorXd& x) const {
  return encode_batch(x);
}

Eigen::MatrixXd NetworkManifold::encode_batch(const Eigen::MatrixXd& xs) const {
  const int m = output_dim();
  if (xs.rows() != m) {
    throw ConfigError("encode expects vectors of length " + std::to_string(m) + ", got " +
                      std::to_string(xs.rows()));
  }
  constexpr Eigen::Index kChunk = 64;
  Eigen::MatrixXd out(latent_dim_, xs.cols());
  for (Eigen::Index start = 0; start < xs.cols(); start += kChunk) {
    const Eigen::Index count = std::min(kChunk, xs.cols() - start);
    Tensor<float> batch({static_cast<int>(count), 1, height_, width_});
    for (Eigen::Index i = 0; i < count; ++i) {
      float* dst = batch.slice(static_cast<int>(i));
      for (int r = 0; r < m; ++r) dst[r] = static_cast<float>(xs(r, start + i));
    }
    const Tensor<float> z = model_->encode(batch);
    for (Eigen::Index i = 0; i < count; ++i) {
      for (int c = 0; c < latent_dim_; ++c) out(c, start + i) = z[i * latent_dim_ + c];
    }
  }
  return out;
}

ManifoldMap::Linearization NetworkManifold::linearize(const Eigen::VectorXd& z) const {
  if (z.size() != latent_dim_) throw ConfigError("latent has the wrong length");
  Tensor<double> primal({1, latent_dim_});
  for (int c = 0; c < latent_dim_; ++c) primal[c] = z[c];
  Tape<double> tape;
  const Tensor<double> value = decoder_.forward(primal, Mode::kInfer, &tape);
  Tensor<double> tangents({latent_dim_, latent_dim_});
  for (int c = 0; c < latent_dim_; ++c) tangents[c * latent_dim_ + c] = 1.0;
  const Tensor<double> columns = decoder_.jvp(tangents, tape);

  const int m = output_dim();
  Linearization out;
  out.value = Eigen::Map<const Eigen::VectorXd>(value.data(), m);
  out.jacobian = Eigen::Map<const Eigen::MatrixXd>(columns.data(), m, latent_dim_);
  return out;
}

Eigen::VectorXd flatten(const SensorWindow& window) {
  return Eigen::Map<const Eigen::VectorXd>(window.values.data(),
                                           static_cast<Eigen::Index>(window.values.size()));
}

namespace {

std::string describe_latent(const Eigen::VectorXd& z) {
  std::ostringstream out;
  out << "[";
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(z.size(), 4); ++i) {
    out << (i ? ", " : "") << z[i];
  }
  out << (z.size() > 4 ? ", ...]" : "]");
  return out.str();
}

void require_finite_jacobian(const Eigen::MatrixXd& j, const Eigen::VectorXd& z) {
  if (!j.allFinite()) {
    throw NumericError("decoder Jacobian has non-finite entries at latent " + describe_latent(z));
  }
}

}  // namespace

Eigen::MatrixXd decoder_jacobian(const ManifoldMap& map, const Eigen::VectorXd& latent) {
  Eigen::MatrixXd j = map.linearize(latent).jacobian;
  require_finite_jacobian(j, latent);
  return j;
}

TangentDecomposition tangent_decompose(const Eigen::VectorXd& y, const Eigen::MatrixXd& jacobian) {
  if (jacobian.rows() <= jacobian.cols()) {
    throw ConfigError("tangent decomposition needs a tall Jacobian, got " +
                      std::to_string(jacobian.rows()) + "x" + std::to_string(jacobian.cols()));
  }
  if (y.size() != jacobian.rows()) {
    throw ConfigError("vector length does not match the Jacobian");
  }
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(jacobian, Eigen::ComputeThinU);
  if (svd.info() != Eigen::Success) throw NumericError("SVD of the decoder Jacobian failed");
  TangentDecomposition out;
  out.singular_values = svd.singularValues();
  out.parallel_coords = svd.matrixU().transpose() * y;
  out.residual_norm = (y - svd.matrixU() * out.parallel_coords).norm();
  return out;
}

// --- Residual tail density --------------------------------------------------

ResidualTailDensity fit_residual_density(std::span<const double> residuals, int bins,
                                         double floor) {
  if (residuals.size() < kMinTailSamples) {
    throw CalibrationError("residual density needs at least " + std::to_string(kMinTailSamples) +
                           " calibration windows, got " + std::to_string(residuals.size()) +
                           "; provide more training data");
  }
  if (bins < 1) throw ConfigError("residual density needs at least one bin");
  double max_residual = 0.0;
  for (double r : residuals) {
    if (!(r >= 0.0) || !std::isfinite(r)) {
      throw DataError("residual norms must be finite and non-negative");
    }
    max_residual = std::max(max_residual, r);
  }
  const double upper = max_residual > 0.0 ? 1.5 * max_residual : 1e-9;
  const double width = upper / bins;

  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  for (double r : residuals) {
    const auto b = std::min<std::size_t>(static_cast<std::size_t>(r / width),
                                         static_cast<std::size_t>(bins - 1));
    counts[b] += 1.0;
  }
  const auto occupied = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; });

  ResidualTailDensity tail;
  tail.floor = floor;
  tail.sample_count = residuals.size();
  tail.interpolate = occupied > 1;
  tail.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) tail.bin_edges[i] = i == bins ? upper : i * width;
  const double total = static_cast<double>(residuals.size()) + bins;
  tail.bin_log_densities.resize(static_cast<std::size_t>(bins));
  for (int i = 0; i < bins; ++i) {
    tail.bin_log_densities[i] = std::log((counts[i] + 1.0) / (total * width));
  }
  return tail;
}

double ResidualTailDensity::density(double r) const {
  if (!fitted()) throw CalibrationError("residual density has not been fitted");
  const std::size_t bins = bin_log_densities.size();
  const double lo = bin_edges.front();
  const double hi = bin_edges.back();
  if (!(r >= lo) || r > hi) return floor;
  const double width = (hi - lo) / static_cast<double>(bins);
  if (!interpolate) {
    const auto b = std::min(static_cast<std::size_t>((r - lo) / width), bins - 1);
    return std::max(std::exp(bin_log_densities[b]), floor);
  }
  const double position = (r - lo) / width - 0.5;  // in units of bin centres
  if (position <= 0.0) return std::max(std::exp(bin_log_densities.front()), floor);
  if (position >= static_cast<double>(bins - 1)) {
    return std::max(std::exp(bin_log_densities.back()), floor);
  }
  const auto left = static_cast<std::size_t>(position);
  const double f = position - static_cast<double>(left);
  const double d = (1.0 - f) * std::exp(bin_log_densities[left]) +
                   f * std::exp(bin_log_densities[left + 1]);
  return std::max(d, floor);
}

double ResidualTailDensity::log_density(double r) const { return std::log(density(r)); }

// --- Score ------------------------------------------------------------------

std::string to_string(Verdict verdict) {
  return verdict == Verdict::kAccept ? "accept" : "reject";
}

std::string to_string(ResidualOrigin origin) {
  return origin == ResidualOrigin::kReconstruction ? "reconstruction" : "origin";
}

ResidualOrigin residual_origin_from_string(const std::string& name) {
  if (name == "reconstruction") return ResidualOrigin::kReconstruction;
  if (name == "origin") return ResidualOrigin::kOrigin;
  throw ConfigError("unknown residual origin '" + name + "'");
}

double log_det_term(const Eigen::VectorXd& singular_values, int* clamped) {
  double total = 0.0;
  int count = 0;
  for (double s : singular_values) {
    if (s < kMinSingularValue) ++count;
    total -= std::log(std::max(s, kMinSingularValue));
  }
  if (clamped) *clamped = count;
  return total;
}

double log_prior_term(int latent_dim) { return -latent_dim * std::numbers::ln2; }

double log_perp_term(double residual_norm, int ambient_dim, int latent_dim,
                     const ResidualTailDensity& tail) {
  const double k = ambient_dim - latent_dim;
  const double r = std::max(residual_norm, kMinResidualNorm);
  return std::lgamma(k / 2.0) - std::numbers::ln2 - (k / 2.0) * std::log(std::numbers::pi) -
         k * std::log(r) + tail.log_density(r);
}

namespace {

struct Decomposed {
  Eigen::VectorXd latent;
  Eigen::VectorXd singular_values;
  double residual_norm = 0.0;
  double parallel_norm = 0.0;
  double decomposed_norm = 0.0;
};

Decomposed decompose(const Eigen::VectorXd& x, const Eigen::VectorXd& z, const ManifoldMap& map,
                     ResidualOrigin origin) {
  if (x.size() != map.output_dim()) {
    throw ConfigError("window has " + std::to_string(x.size()) + " values, model expects " +
                      std::to_string(map.output_dim()));
  }
  if (!x.allFinite()) throw NumericError("window contains non-finite values");
  const ManifoldMap::Linearization lin = map.linearize(z);
  require_finite_jacobian(lin.jacobian, z);
  const Eigen::VectorXd y = origin == ResidualOrigin::kReconstruction ? Eigen::VectorXd(x - lin.value) : x;
  const TangentDecomposition t = tangent_decompose(y, lin.jacobian);
  return {z, t.singular_values, t.residual_norm, t.parallel_coords.norm(), y.norm()};
}

ScoreBreakdown assemble(const Decomposed& d, int ambient_dim, const ResidualTailDensity& tail,
                        double tau) {
  if (!tail.fitted()) throw CalibrationError("residual density has not been fitted");
  ScoreBreakdown s;
  const int n = static_cast<int>(d.latent.size());
  s.log_det_term = log_det_term(d.singular_values, &s.clamped_singular_values);
  s.log_prior_term = log_prior_term(n);
  s.log_perp_term = log_perp_term(d.residual_norm, ambient_dim, n, tail);
  s.log_p = s.log_det_term + s.log_prior_term + s.log_perp_term;
  s.residual_norm = d.residual_norm;
  s.parallel_norm = d.parallel_norm;
  s.decomposed_norm = d.decomposed_norm;
  s.singular_values.assign(d.singular_values.begin(), d.singular_values.end());
  s.latent.assign(d.latent.begin(), d.latent.end());
  s.threshold = tau;
  s.verdict = s.log_p >= tau ? Verdict::kAccept : Verdict::kReject;
  return s;
}

std::vector<Decomposed> decompose_windows(std::span<const SensorWindow> windows,
                                          const ManifoldMap& map, ResidualOrigin origin) {
  std::vector<Decomposed> out;
  if (windows.empty()) return out;
  Eigen::MatrixXd xs(map.output_dim(), static_cast<Eigen::Index>(windows.size()));
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i].values.size() != static_cast<std::size_t>(map.output_dim())) {
      throw ConfigError("window has " + std::to_string(windows[i].values.size()) +
                        " values, model expects " + std::to_string(map.output_dim()));
    }
    xs.col(static_cast<Eigen::Index>(i)) = flatten(windows[i]);
  }
  const Eigen::MatrixXd zs = map.encode_batch(xs);
  out.reserve(windows.size());
  for (Eigen::Index i = 0; i < xs.cols(); ++i) {
    out.push_back(decompose(xs.col(i), zs.col(i), map, origin));
  }
  return out;
}

}  // namespace

ScoreBreakdown score_at(const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                        const ManifoldMap& map, const ResidualTailDensity& tail, double tau,
                        ResidualOrigin origin) {
  if (!tail.fitted()) throw CalibrationError("residual density has not been fitted");
  return assemble(decompose(x, z, map, origin), map.output_dim(), tail, tau);
}

ScoreBreakdown score(const Eigen::VectorXd& x, const ManifoldMap& map,
                     const ResidualTailDensity& tail, double tau, ResidualOrigin origin) {
  if (!tail.fitted()) throw CalibrationError("residual density has not been fitted");
  if (x.size() != map.output_dim()) {
    throw ConfigError("window has " + std::to_string(x.size()) + " values, model expects " +
                      std::to_string(map.output_dim()));
  }
  return score_at(x, map.encode(x), map, tail, tau, origin);
}

std::vector<ScoreBreakdown> score_windows(std::span<const SensorWindow> windows,
                                          const ManifoldMap& map, const ResidualTailDensity& tail,
                                          double tau, ResidualOrigin origin) {
  if (!tail.fitted()) throw CalibrationError("residual density has not been fitted");
  std::vector<ScoreBreakdown> out;
  for (const Decomposed& d : decompose_windows(windows, map, origin)) {
    out.push_back(assemble(d, map.output_dim(), tail, tau));
  }
  return out;
}

std::vector<double> residual_norms(std::span<const SensorWindow> windows, const ManifoldMap& map,
                                   ResidualOrigin origin) {
  std::vector<double> out;
  for (const Decomposed& d : decompose_windows(windows, map, origin)) {
    out.push_back(d.residual_norm);
  }
  return out;
}

double calibrate_threshold(std::span<const double> legit_scores, double target_tpr) {
  if (legit_scores.size() < kMinCalibrationScores) {
    throw CalibrationError("threshold calibration needs at least " +
                           std::to_string(kMinCalibrationScores) + " legitimate scores, got " +
                           std::to_string(legit_scores.size()));
  }
  if (!(target_tpr > 0.0) || target_tpr > 1.0) {
    throw ConfigError("target TPR must lie in (0, 1]");
  }
  std::vector<double> sorted(legit_scores.begin(), legit_scores.end());
  for (double s : sorted) {
    if (!std::isfinite(s)) throw NumericError("calibration scores must be finite");
  }
  std::sort(sorted.begin(), sorted.end());
  const double position = (1.0 - target_tpr) * static_cast<double>(sorted.size() - 1);
  const auto index = static_cast<std::size_t>(std::floor(position + 1e-9));
  return sorted[std::min(index, sorted.size() - 1)];
}

Calibration calibrate(std::span<const SensorWindow> windows, const ManifoldMap& map,
                      double target_tpr, ResidualOrigin origin) {
  const std::vector<Decomposed> parts = decompose_windows(windows, map, origin);
  std::vector<double> residuals;
  residuals.reserve(parts.size());
  for (const Decomposed& d : parts) residuals.push_back(d.residual_norm);

  Calibration out;
  out.tail = fit_residual_density(residuals);
  std::vector<double> log_ps;
  for (const Decomposed& d : parts) {
    out.scores.push_back(assemble(d, map.output_dim(), out.tail, 0.0));
    log_ps.push_back(out.scores.back().log_p);
  }
  out.tau = calibrate_threshold(log_ps, target_tpr);
  for (ScoreBreakdown& s : out.scores) {
    s.threshold = out.tau;
    s.verdict = s.log_p >= out.tau ? Verdict::kAccept : Verdict::kReject;
  }
  return out;
}

}  // namespace raoc
