#include <benchmark/benchmark.h>

#include <random>

#include "preflearn/lm/logprobs.hpp"
#include "preflearn/lm/model.hpp"
#include "preflearn/lm/sampling.hpp"
#include "preflearn/ppo/ppo.hpp"

namespace {

using namespace preflearn;

lm::TokenSequence tokens(std::size_t n) {
  lm::TokenSequence t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(static_cast<lm::TokenId>('a' + i % 26));
  return t;
}

void BM_Forward(benchmark::State& state) {
  lm::ModelConfig cfg;
  const auto params = lm::PolicyParams::initialized(cfg, 1);
  const auto inputs = lm::frame(tokens(static_cast<std::size_t>(state.range(0)) - 1));
  for (auto _ : state) benchmark::DoNotOptimize(lm::forward(params, std::span<const lm::TokenId>(inputs)));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(32)->Arg(64);

void BM_ForwardBackward(benchmark::State& state) {
  lm::ModelConfig cfg;
  const auto params = lm::PolicyParams::initialized(cfg, 1);
  const auto prompt = tokens(8);
  const auto cont = tokens(static_cast<std::size_t>(state.range(0)));
  std::vector<float> grad(params.size());
  const std::vector<float> coeff(cont.size(), 1.0f);
  for (auto _ : state) {
    const auto pass = lm::score_continuation(params, prompt, cont);
    lm::backward_continuation(params, pass, std::span<const float>(coeff), std::span<float>(grad));
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(48);

void BM_Sample(benchmark::State& state) {
  lm::ModelConfig cfg;
  cfg.context = 32;
  const auto params = lm::PolicyParams::initialized(cfg, 1);
  const auto prompt = tokens(6);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(lm::sample(params, prompt, 0.7, 16, seed++));
}
BENCHMARK(BM_Sample);

void BM_Gae(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d;
  std::vector<double> r(n), v(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = d(rng), v[i] = d(rng);
  for (auto _ : state) benchmark::DoNotOptimize(ppo::compute_gae(r, v, 1.0, 0.95));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Gae)->Arg(64)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
