#include <benchmark/benchmark.h>

#include "av/rng.hpp"
#include "av/signal.hpp"

namespace {

av::signal::Waveform noise(int64_t n, int rate) {
  av::Rng rng(1);
  std::vector<double> x(static_cast<size_t>(n));
  for (auto& v : x) v = rng.uniform(-0.5, 0.5);
  return av::signal::Waveform::mono(std::move(x), rate);
}

void BM_stft_paper_geometry(benchmark::State& state) {
  const auto w = noise(44100, 21000);
  av::signal::StftConfig cfg;
  cfg.frame_ms = 64.0;
  cfg.hop_ms = 16.0;
  for (auto _ : state) {
    auto s = av::signal::stft(w, cfg);
    benchmark::DoNotOptimize(s.magnitude.data());
  }
}
BENCHMARK(BM_stft_paper_geometry);

void BM_istft_paper_geometry(benchmark::State& state) {
  const auto w = noise(44100, 21000);
  av::signal::StftConfig cfg;
  cfg.frame_ms = 64.0;
  cfg.hop_ms = 16.0;
  const auto s = av::signal::stft(w, cfg);
  for (auto _ : state) {
    auto back = av::signal::istft(s);
    benchmark::DoNotOptimize(back.samples.data());
  }
}
BENCHMARK(BM_istft_paper_geometry);

void BM_resample_21k_to_16k(benchmark::State& state) {
  const auto w = noise(21000, 21000);
  for (auto _ : state) {
    auto out = av::signal::resample(w, 16000);
    benchmark::DoNotOptimize(out.samples.data());
  }
}
BENCHMARK(BM_resample_21k_to_16k);

}  // namespace
