#include "raoc/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "raoc/errors.hpp"

namespace raoc {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  for (double lr : {lr_encoder, lr_decoder, lr_latent_disc, lr_sample_disc}) {
    if (!(lr > 0.0)) throw ConfigError("learning rates must be > 0");
  }
  if (!(lambda_rec > 0.0)) throw ConfigError("lambda_rec must be > 0");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (!(adversarial_weight >= 0.0)) throw ConfigError("adversarial_weight must be >= 0");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
}

bool LossBundle::all_finite() const {
  return std::isfinite(sample_adv) && std::isfinite(latent_adv) && std::isfinite(rec) &&
         std::isfinite(gen_sample_adv) && std::isfinite(gen_latent_adv);
}

void TrainingLog::write_csv(std::ostream& out) const {
  out << "step,rec,latent_adv,sample_adv,gen_latent_adv,gen_sample_adv\n";
  std::ostringstream line;
  line.precision(10);
  for (const LossBundle& b : steps) {
    line.str({});
    line << b.step << ',' << b.rec << ',' << b.latent_adv << ',' << b.sample_adv << ','
         << b.gen_latent_adv << ',' << b.gen_sample_adv << '\n';
    out << line.str();
  }
}

template <typename T>
double reconstruction_loss(const Tensor<T>& x, const Tensor<T>& x_hat) {
  if (x.shape() != x_hat.shape()) {
    throw ConfigError("reconstruction_loss: shapes " + x.shape_string() + " and " +
                      x_hat.shape_string() + " differ");
  }
  if (x.rank() < 1 || x.dim(0) == 0) throw DataError("reconstruction_loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(x_hat[i]);
    total += d * d;
  }
  return total / x.dim(0);
}

template double reconstruction_loss<float>(const Tensor<float>&, const Tensor<float>&);
template double reconstruction_loss<double>(const Tensor<double>&, const Tensor<double>&);

double binary_cross_entropy(const Tensor<float>& p, float target) {
  if (p.size() == 0) throw DataError("binary_cross_entropy: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(static_cast<double>(p[i]), kBceClamp, 1.0 - kBceClamp);
    total -= target * std::log(q) + (1.0 - target) * std::log(1.0 - q);
  }
  return total / static_cast<double>(p.size());
}

Tensor<float> binary_cross_entropy_grad(const Tensor<float>& p, float target) {
  Tensor<float> g(p.shape());
  const double n = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = static_cast<double>(p[i]);
    if (q < kBceClamp || q > 1.0 - kBceClamp) continue;
    g[i] = static_cast<float>((-target / q + (1.0 - target) / (1.0 - q)) / n);
  }
  return g;
}

namespace {

AdamConfig adam(double lr) {
  AdamConfig c;
  c.learning_rate = lr;
  return c;
}

void add_into(Tensor<float>& dst, const Tensor<float>& src, float scale = 1.0f) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

Tensor<float> scaled(Tensor<float> t, float scale) {
  for (float& v : t.values()) v *= scale;
  return t;
}

}  // namespace

Trainer::Trainer(Model& model, TrainConfig config)
    : model_(model),
      config_((config.validate(), config)),
      encoder_opt_(model.encoder().parameters(), adam(config.lr_encoder)),
      decoder_opt_(model.decoder().parameters(), adam(config.lr_decoder)),
      latent_opt_(model.latent_disc().parameters(), adam(config.lr_latent_disc)),
      sample_opt_(model.sample_disc().parameters(), adam(config.lr_sample_disc)),
      rng_(config.seed) {}

Tensor<float> Trainer::corrupt(const Tensor<float>& batch) {
  Tensor<float> out = batch;
  if (config_.noise_std == 0.0) return out;
  std::normal_distribution<float> noise(0.0f, static_cast<float>(config_.noise_std));
  for (float& v : out.values()) v += noise(rng_);
  return out;
}

Tensor<float> Trainer::draw_prior(int n) {
  Tensor<float> z({n, model_.latent_dim()});
  std::uniform_real_distribution<float> uniform(-1.0f, 1.0f);
  for (float& v : z.values()) v = uniform(rng_);
  return z;
}

void Trainer::emit(Phase phase, double loss) const {
  if (observer_) observer_({steps_, phase, loss});
}

LossBundle Trainer::step(const Tensor<float>& batch) {
  if (!batch.all_finite()) throw NumericError("training batch contains non-finite values");
  Network<float>& enc = model_.encoder();
  Network<float>& dec = model_.decoder();
  Network<float>& ld = model_.latent_disc();
  Network<float>& sd = model_.sample_disc();
  const int n = batch.dim(0);
  LossBundle losses;
  losses.step = steps_;

  Tape<float> enc_tape;
  const Tensor<float> z = enc.forward(corrupt(batch), Mode::kTrain, &enc_tape);
  enc.commit_statistics(enc_tape);
  const Tensor<float> prior = draw_prior(n);

  // Sample discriminator: real windows -> 1, decoded prior draws -> 0.
  Tape<float> fake_tape;
  const Tensor<float> fake = dec.forward(prior, Mode::kTrain, &fake_tape);
  dec.commit_statistics(fake_tape);
  {
    sd.zero_grad();
    Tape<float> fake_disc, real_disc;
    const Tensor<float> p_fake = sd.forward(fake, Mode::kTrain, &fake_disc);
    const Tensor<float> p_real = sd.forward(batch, Mode::kTrain, &real_disc);
    sd.commit_statistics(fake_disc);
    sd.commit_statistics(real_disc);
    losses.sample_adv = binary_cross_entropy(p_fake, 0.0f) + binary_cross_entropy(p_real, 1.0f);
    sd.backward(binary_cross_entropy_grad(p_fake, 0.0f), fake_disc);
    sd.backward(binary_cross_entropy_grad(p_real, 1.0f), real_disc);
    sample_opt_.step();
    emit(Phase::kSampleDiscriminator, losses.sample_adv);
  }

  // Latent discriminator: encoded latents -> 0, prior draws -> 1.
  {
    ld.zero_grad();
    Tape<float> code_disc, prior_disc;
    const Tensor<float> p_code = ld.forward(z, Mode::kTrain, &code_disc);
    const Tensor<float> p_prior = ld.forward(prior, Mode::kTrain, &prior_disc);
    ld.commit_statistics(code_disc);
    ld.commit_statistics(prior_disc);
    losses.latent_adv = binary_cross_entropy(p_code, 0.0f) + binary_cross_entropy(p_prior, 1.0f);
    ld.backward(binary_cross_entropy_grad(p_code, 0.0f), code_disc);
    ld.backward(binary_cross_entropy_grad(p_prior, 1.0f), prior_disc);
    latent_opt_.step();
    emit(Phase::kLatentDiscriminator, losses.latent_adv);
  }

  // Autoencoder: reconstruction plus the flipped targets. Discriminator
  // statistics are not committed here; they act as fixed critics.
  enc.zero_grad();
  dec.zero_grad();
  Tape<float> rec_tape;
  const Tensor<float> x_hat = dec.forward(z, Mode::kTrain, &rec_tape);
  dec.commit_statistics(rec_tape);
  losses.rec = reconstruction_loss(batch, x_hat);

  const float lambda = static_cast<float>(config_.lambda_rec);
  Tensor<float> grad_x_hat(x_hat.shape());
  for (std::size_t i = 0; i < x_hat.size(); ++i) {
    grad_x_hat[i] = lambda * 2.0f * (x_hat[i] - batch[i]) / static_cast<float>(n);
  }
  Tensor<float> grad_z = dec.backward(grad_x_hat, rec_tape);

  const float weight = static_cast<float>(config_.adversarial_weight);
  if (weight > 0.0f) {
    Tape<float> fake_disc, code_disc;
    const Tensor<float> q_fake = sd.forward(fake, Mode::kTrain, &fake_disc);
    const Tensor<float> q_code = ld.forward(z, Mode::kTrain, &code_disc);
    losses.gen_sample_adv = binary_cross_entropy(q_fake, 1.0f);
    losses.gen_latent_adv = binary_cross_entropy(q_code, 1.0f);
    const Tensor<float> grad_fake =
        sd.backward(scaled(binary_cross_entropy_grad(q_fake, 1.0f), weight), fake_disc);
    dec.backward(grad_fake, fake_tape);
    add_into(grad_z, ld.backward(scaled(binary_cross_entropy_grad(q_code, 1.0f), weight), code_disc));
    if (config_.log_constant_terms) {
      losses.gen_sample_adv += binary_cross_entropy(sd.forward(batch, Mode::kTrain), 0.0f);
      losses.gen_latent_adv += binary_cross_entropy(ld.forward(prior, Mode::kTrain), 0.0f);
    }
  }
  enc.backward(grad_z, enc_tape);

  if (!losses.all_finite()) {
    std::ostringstream msg;
    msg << "training diverged at step " << steps_ << ": rec=" << losses.rec
        << " latent_adv=" << losses.latent_adv << " sample_adv=" << losses.sample_adv
        << " gen_latent_adv=" << losses.gen_latent_adv
        << " gen_sample_adv=" << losses.gen_sample_adv;
    throw NumericError(msg.str());
  }
  encoder_opt_.step();
  decoder_opt_.step();
  emit(Phase::kAutoencoder,
       config_.lambda_rec * losses.rec +
           config_.adversarial_weight * (losses.gen_sample_adv + losses.gen_latent_adv));
  ++steps_;
  return losses;
}

LossBundle Trainer::evaluate(const Tensor<float>& batch) {
  const Network<float>& enc = model_.encoder();
  const Network<float>& dec = model_.decoder();
  const Network<float>& ld = model_.latent_disc();
  const Network<float>& sd = model_.sample_disc();
  LossBundle losses;
  losses.step = steps_;
  const Tensor<float> z = enc.forward(corrupt(batch), Mode::kTrain);
  const Tensor<float> prior = draw_prior(batch.dim(0));
  const Tensor<float> fake = dec.forward(prior, Mode::kTrain);
  const Tensor<float> p_fake = sd.forward(fake, Mode::kTrain);
  const Tensor<float> p_real = sd.forward(batch, Mode::kTrain);
  const Tensor<float> p_code = ld.forward(z, Mode::kTrain);
  const Tensor<float> p_prior = ld.forward(prior, Mode::kTrain);
  losses.sample_adv = binary_cross_entropy(p_fake, 0.0f) + binary_cross_entropy(p_real, 1.0f);
  losses.latent_adv = binary_cross_entropy(p_code, 0.0f) + binary_cross_entropy(p_prior, 1.0f);
  losses.rec = reconstruction_loss(batch, dec.forward(z, Mode::kTrain));
  losses.gen_sample_adv = binary_cross_entropy(p_fake, 1.0f) + binary_cross_entropy(p_real, 0.0f);
  losses.gen_latent_adv = binary_cross_entropy(p_code, 1.0f) + binary_cross_entropy(p_prior, 0.0f);
  return losses;
}

std::int64_t planned_iterations(std::size_t window_count, const TrainConfig& config) {
  const std::int64_t per_epoch =
      static_cast<std::int64_t>(window_count) / std::max(1, config.batch_size);
  const std::int64_t total = per_epoch * config.epochs;
  return config.max_steps > 0 ? std::min(total, config.max_steps) : total;
}

TrainResult train(std::span<const SensorWindow> windows, const NetworkSpec& spec,
                  const TrainConfig& config, const PhaseObserver& observer) {
  config.validate();
  if (windows.empty()) throw DataError("train: empty dataset");
  for (const SensorWindow& w : windows) {
    if (w.user_id != windows.front().user_id) {
      throw DataError("train: windows from users '" + windows.front().user_id + "' and '" +
                      w.user_id + "' mixed; training is one-class");
    }
  }
  if (windows.size() < static_cast<std::size_t>(config.batch_size)) {
    throw DataError("train: " + std::to_string(windows.size()) +
                    " windows is fewer than one batch of " + std::to_string(config.batch_size));
  }

  TrainResult result{Model(spec, config.seed), {}};
  const std::int64_t total = planned_iterations(windows.size(), config);
  result.log.steps.reserve(static_cast<std::size_t>(total));
  {
    Trainer trainer(result.model, config);
    trainer.set_observer(observer);
    std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(windows.size());
    const std::size_t batch = static_cast<std::size_t>(config.batch_size);
    const std::size_t per_epoch = windows.size() / batch;
    std::vector<const SensorWindow*> members(batch);
    while (trainer.steps() < total) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      for (std::size_t b = 0; b < per_epoch && trainer.steps() < total; ++b) {
        for (std::size_t i = 0; i < batch; ++i) members[i] = &windows[order[b * batch + i]];
        result.log.steps.push_back(trainer.step(stack_windows(std::span<const SensorWindow* const>(members))));
      }
    }
  }
  return result;
}

}  // namespace raoc
