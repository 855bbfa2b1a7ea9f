#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "ptr/diff/fit.hpp"
#include "ptr/diff/loss.hpp"
#include "ptr/params.hpp"
#include "ptr/pulse.hpp"
#include "ptr/resonator.hpp"
#include "ptr/synth.hpp"

using namespace ptr;

namespace {

std::vector<double> noise(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = u(rng);
  return x;
}

control::AudioControls ramp(double seconds, const SynthConfig& cfg) {
  const auto n = static_cast<std::size_t>(seconds * 1000.0) + 1;
  std::vector<double> rpm(n), tq(n, 0.5);
  for (std::size_t i = 0; i < n; ++i) rpm[i] = 800.0 + 3000.0 * i / (n - 1);
  return control::to_audio_rate(control::make_trajectory(rpm, tq, 1000.0), cfg.sample_rate);
}

void BM_PulseSample(benchmark::State& state) {
  const bool grad = state.range(0) != 0;
  pulse::PulseInputs in{1.0, 0.15, 8.0, 1.0, 0.7, 0.5, 25.0};
  for (auto _ : state) {
    in.phi = std::fmod(in.phi + 0.013, 6.283185307179586);
    if (grad) {
      benchmark::DoNotOptimize(pulse::pulse_sample<true>(in, 96, 8000.0));
    } else {
      benchmark::DoNotOptimize(pulse::pulse_sample<false>(in, 96, 8000.0));
    }
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PulseSample)->Arg(0)->Arg(1);

void BM_HarmonicStackLoop(benchmark::State& state) {
  double theta = 1.0;
  for (auto _ : state) {
    theta = std::fmod(theta + 0.013, 6.283185307179586);
    benchmark::DoNotOptimize(pulse::harmonic_stack(theta, 0.15, 96, 25.0, 8000.0));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_HarmonicStackLoop);

resonator::AllPoleCoeffs bench_coeffs(int delay) {
  const auto d = resonator::reflection_to_direct(1.0, 0.3);
  const auto e = resonator::integrate_gain(d.a1, d.a2, 2.0);
  return resonator::build_coeff_vector(delay, e.alpha, e.beta, 16, 400);
}

void BM_AllPoleApply(benchmark::State& state) {
  const auto x = noise(static_cast<std::size_t>(state.range(0)), 1);
  const auto c = bench_coeffs(160);
  for (auto _ : state) benchmark::DoNotOptimize(resonator::allpole_apply(x, c));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AllPoleApply)->Arg(4096)->Arg(64000);

void BM_KsRecursive(benchmark::State& state) {
  const auto x = noise(static_cast<std::size_t>(state.range(0)), 1);
  const auto c = bench_coeffs(160);
  for (auto _ : state) benchmark::DoNotOptimize(resonator::ks_recursive(x, c));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KsRecursive)->Arg(4096)->Arg(64000);

void BM_MrStft(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto y = noise(n, 2), y_hat = noise(n, 3);
  const diff::MrStftLoss loss(y);
  const bool grad = state.range(1) != 0;
  std::vector<double> g(n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(loss.evaluate(y_hat, grad ? &g : nullptr));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MrStft)->Args({16000, 0})->Args({64000, 0})->Args({64000, 1})->Unit(benchmark::kMillisecond);

void BM_RenderStreaming(benchmark::State& state) {
  SynthConfig cfg;
  const auto controls = ramp(2.0, cfg);
  const auto params = default_params(cfg);
  for (auto _ : state) {
    benchmark::DoNotOptimize(render(params, controls, cfg, static_cast<std::size_t>(state.range(0))));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(controls.size()));
}
BENCHMARK(BM_RenderStreaming)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_FitIteration(benchmark::State& state) {
  SynthConfig cfg;
  const auto controls = ramp(static_cast<double>(state.range(0)), cfg);
  const auto params = default_params(cfg);
  const auto target = render(params, controls, cfg, 512);
  diff::FitConfig fc;
  fc.iterations = 1;
  for (auto _ : state) benchmark::DoNotOptimize(diff::fit(target, controls, params, fc, cfg));
}
BENCHMARK(BM_FitIteration)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
