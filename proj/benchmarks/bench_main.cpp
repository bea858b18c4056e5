#include <benchmark/benchmark.h>

#include <vector>

#include "solarlab/agents.hpp"
#include "solarlab/dataio.hpp"
#include "solarlab/env.hpp"
#include "solarlab/forecast.hpp"
#include "solarlab/nn.hpp"
#include "solarlab/rng.hpp"

namespace sl = solarlab;

namespace {

sl::MlpParams make_actor() {
  sl::Rng rng(7);
  return sl::MlpParams::make({4, 64, 64, 64, 2}, sl::PpoAgent::actor_acts(3),
                             rng);
}

void bench_mlp_forward(benchmark::State& state) {
  sl::MlpParams net = make_actor();
  sl::Vector x(4);
  x << 0.3, -1.2, 0.8, 0.1;
  for (auto _ : state) {
    sl::Vector out = sl::mlp_forward(net, x);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(bench_mlp_forward);

void bench_mlp_backward(benchmark::State& state) {
  sl::MlpParams net = make_actor();
  sl::Vector x(4);
  x << 0.3, -1.2, 0.8, 0.1;
  sl::Vector up(2);
  up << 1.0, -1.0;
  sl::Grads g = sl::Grads::zeros_like(net);
  for (auto _ : state) {
    sl::MlpCache cache;
    sl::Vector out = sl::mlp_forward(net, x, cache);
    benchmark::DoNotOptimize(out);
    g.set_zero();
    sl::Vector din = sl::mlp_backward(net, cache, up, g);
    benchmark::DoNotOptimize(din);
  }
}
BENCHMARK(bench_mlp_backward);

void bench_gae_sweep(benchmark::State& state) {
  size_t n = static_cast<size_t>(state.range(0));
  sl::Rng rng(11);
  std::vector<double> rewards(n), values(n);
  std::vector<uint8_t> dones(n, 0);
  for (size_t i = 0; i < n; ++i) {
    rewards[i] = rng.uniform();
    values[i] = rng.normal();
  }
  dones.back() = 1;
  for (auto _ : state) {
    sl::GaeResult res = sl::gae(rewards, values, dones, 0.99, 0.95);
    benchmark::DoNotOptimize(res);
  }
}
BENCHMARK(bench_gae_sweep)->Arg(256)->Arg(4096);

void bench_env_episode(benchmark::State& state) {
  sl::Dataset ds = sl::synth_dataset(365, 42);
  sl::TradingEnv env(ds, sl::NormStats::identity());
  for (auto _ : state) {
    env.reset();
    int i = 0;
    while (!env.done())
      env.step(++i % 7 == 0 ? sl::Action::Sell : sl::Action::Hold);
    benchmark::DoNotOptimize(env.episode_total());
  }
}
BENCHMARK(bench_env_episode);

void bench_soliton_embed(benchmark::State& state) {
  sl::Rng rng(3);
  sl::SolitonEmbed e = sl::SolitonEmbed::make(
      128, 64, sl::SolitonTail::SinOfRatio, sl::SolitonKernel::Trig, rng);
  double x = 123.45;
  for (auto _ : state) {
    sl::Vector out = sl::soliton_embed(x, e);
    benchmark::DoNotOptimize(out);
    x += 0.01;
    if (x > 360.0) x = 0.0;
  }
}
BENCHMARK(bench_soliton_embed);

void bench_moe_forward(benchmark::State& state) {
  sl::MoEConfig cfg;
  sl::Rng rng(5);
  sl::MoEModel m = sl::MoEModel::make(cfg, rng);
  double x = 17.3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sl::moe_forward(m, x));
    x += 1.37;
    if (x > 360.0) x = 0.0;
  }
}
BENCHMARK(bench_moe_forward);

}  // namespace

BENCHMARK_MAIN();
