#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "raoc/networks.hpp"
#include "raoc/optimizer.hpp"
#include "raoc/preprocessing.hpp"

namespace raoc {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  double lr_encoder = 0.00005;
  double lr_decoder = 0.0003;
  double lr_latent_disc = 0.00001;
  double lr_sample_disc = 0.0001;
  double lambda_rec = 10.0;
  double noise_std = 0.2;  // standard deviation of the input corruption
  std::uint64_t seed = 0;
  // Weight on the two adversarial terms of the autoencoder update. Zero turns
  // the update into plain denoising-autoencoder training.
  double adversarial_weight = 1.0;
  // Upper bound on iterations; 0 means epochs * floor(N / batch_size).
  std::int64_t max_steps = 0;
  // Whether the terms of the autoencoder update that do not depend on the
  // encoder or decoder are evaluated for the log. They never carry gradient.
  bool log_constant_terms = true;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Losses of one iteration, in the order they are computed. Adversarial terms
// are sums of two mean binary cross-entropies.
struct LossBundle {
  std::int64_t step = 0;
  double sample_adv = 0.0;      // sample discriminator update
  double latent_adv = 0.0;      // latent discriminator update
  double rec = 0.0;             // reconstruction term of the autoencoder update
  double gen_sample_adv = 0.0;  // flipped-target sample term
  double gen_latent_adv = 0.0;  // flipped-target latent term

  bool all_finite() const;
};

enum class Phase { kSampleDiscriminator, kLatentDiscriminator, kAutoencoder };

struct PhaseEvent {
  std::int64_t step;
  Phase phase;
  double loss;
};

using PhaseObserver = std::function<void(const PhaseEvent&)>;

struct TrainingLog {
  std::vector<LossBundle> steps;

  // step,rec,latent_adv,sample_adv,gen_latent_adv,gen_sample_adv
  void write_csv(std::ostream& out) const;
};

// Sum of squared errors over each sample's cells, averaged over the batch.
template <typename T>
double reconstruction_loss(const Tensor<T>& x, const Tensor<T>& x_hat);

inline constexpr double kBceClamp = 1e-7;

// Mean binary cross-entropy of (N, 1) probabilities against a constant target.
double binary_cross_entropy(const Tensor<float>& probabilities, float target);
// d(mean BCE)/d(probabilities); zero where the clamp is active.
Tensor<float> binary_cross_entropy_grad(const Tensor<float>& probabilities, float target);

// One Algorithm-1 iteration per call. Owns the optimizers and the noise
// source; the model must outlive the trainer.
class Trainer {
 public:
  Trainer(Model& model, TrainConfig config);

  LossBundle step(const Tensor<float>& batch);
  // All loss terms for a batch without updating anything.
  LossBundle evaluate(const Tensor<float>& batch);

  void set_observer(PhaseObserver observer) { observer_ = std::move(observer); }
  std::int64_t steps() const { return steps_; }

 private:
  Tensor<float> corrupt(const Tensor<float>& batch);
  Tensor<float> draw_prior(int n);
  void emit(Phase phase, double loss) const;

  Model& model_;
  TrainConfig config_;
  Adam<float> encoder_opt_;
  Adam<float> decoder_opt_;
  Adam<float> latent_opt_;
  Adam<float> sample_opt_;
  std::mt19937_64 rng_;
  std::int64_t steps_ = 0;
  PhaseObserver observer_;
};

struct TrainResult {
  Model model;
  TrainingLog log;
};

// Trains all four networks on one user's windows. The collection must hold
// at least batch_size windows, all from the same user.
TrainResult train(std::span<const SensorWindow> windows, const NetworkSpec& spec,
                  const TrainConfig& config, const PhaseObserver& observer = {});

std::int64_t planned_iterations(std::size_t window_count, const TrainConfig& config);

}  // namespace raoc
