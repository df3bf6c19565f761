#include <benchmark/benchmark.h>

#include <random>

#include "raoc/attention.hpp"
#include "raoc/networks.hpp"
#include "raoc/scoring.hpp"
#include "raoc/training.hpp"

using namespace raoc;

namespace {

template <typename T>
Tensor<T> uniform_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
  return t;
}

// Attention on a feature map shaped like the encoder's first attention block.
void BM_AttentionForward(benchmark::State& state) {
  const int channels = static_cast<int>(state.range(0));
  AttentionConfig config{channels, channels, 5, 1, true};
  RelativeAttention<float> layer(config);
  std::mt19937_64 rng(1);
  layer.initialize(rng);
  const AttentionParams<float> params = layer.params();
  const Tensor<float> x = uniform_tensor<float>({16, channels, 12, 50}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(relative_attention_forward(x, params, config));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_AttentionForward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_AttentionBackward(benchmark::State& state) {
  AttentionConfig config{32, 32, 5, 1, true};
  RelativeAttention<float> layer(config);
  std::mt19937_64 rng(2);
  layer.initialize(rng);
  const AttentionParams<float> params = layer.params();
  const Tensor<float> x = uniform_tensor<float>({16, 32, 12, 50}, rng);
  const Tensor<float> up = uniform_tensor<float>({16, 32, 12, 50}, rng, -1.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(relative_attention_backward(x, params, config, up));
}
BENCHMARK(BM_AttentionBackward)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  ArchitectureOptions options;
  options.base_channels = static_cast<int>(state.range(0));
  Model model(default_network_spec(options), 3);
  TrainConfig config;
  Trainer trainer(model, config);
  std::mt19937_64 rng(3);
  const Tensor<float> batch = uniform_tensor<float>({config.batch_size, 1, 12, 50}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(batch));
}
BENCHMARK(BM_TrainStep)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

// One full 600 x 64 decoder Jacobian in float64.
void BM_DecoderJacobian(benchmark::State& state) {
  const Model model(default_network_spec(), 4);
  const NetworkManifold map(model);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  Eigen::VectorXd z(64);
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(decoder_jacobian(map, z));
}
BENCHMARK(BM_DecoderJacobian)->Unit(benchmark::kMillisecond);

void BM_TangentDecompose(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd j(600, 64);
  Eigen::VectorXd y(600);
  for (Eigen::Index i = 0; i < j.size(); ++i) j.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = n(rng);
  for (auto _ : state) benchmark::DoNotOptimize(tangent_decompose(y, j));
}
BENCHMARK(BM_TangentDecompose)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
