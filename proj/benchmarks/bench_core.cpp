#include <benchmark/benchmark.h>

#include "egovideo/common/rng.hpp"
#include "egovideo/corpus/vocabulary.hpp"
#include "egovideo/corpus/world.hpp"
#include "egovideo/encoders/contrastive.hpp"
#include "egovideo/encoders/model.hpp"
#include "egovideo/features/features.hpp"
#include "egovideo/metrics/metrics.hpp"
#include "egovideo/moments/moments.hpp"

using namespace egovideo;

namespace {

std::vector<TemporalSegment> random_segments(int n, uint64_t seed) {
  Rng rng(seed);
  std::vector<TemporalSegment> out;
  for (int i = 0; i < n; ++i) {
    const double a = 100.0 * rng.uniform();
    out.push_back({a, a + 1.0 + 10.0 * rng.uniform(), rng.uniform(), std::nullopt});
  }
  return out;
}

nn::Matrix unit_rows(int n, int d, uint64_t seed) {
  Rng rng(seed);
  nn::Matrix m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = rng.normal();
  m.rowwise().normalize();
  return m;
}

void BM_Levenshtein(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(1);
  std::vector<int> a(n), b(n);
  for (auto& x : a) x = rng.uniform_int(8);
  for (auto& x : b) x = rng.uniform_int(8);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::levenshtein(a, b));
}
BENCHMARK(BM_Levenshtein)->Arg(20)->Arg(200);

void BM_SoftNms(benchmark::State& state) {
  const auto segs = random_segments(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(moments::soft_nms(segs, 0.5, 1e-3));
}
BENCHMARK(BM_SoftNms)->Arg(64)->Arg(512);

void BM_ContrastiveLoss(benchmark::State& state) {
  const int b = static_cast<int>(state.range(0));
  const auto v = unit_rows(b, 32, 3);
  const auto t = unit_rows(b, 32, 4);
  for (auto _ : state) benchmark::DoNotOptimize(encoders::contrastive_loss(v, t, 0.07).loss);
}
BENCHMARK(BM_ContrastiveLoss)->Arg(16)->Arg(128);

void BM_SnippetExtraction(benchmark::State& state) {
  corpus::WorldConfig wc;
  wc.num_clips = 1;
  wc.min_duration_s = wc.max_duration_s = 12.0;
  wc.seed = 5;
  const auto world = corpus::generate_world(wc);
  const encoders::TwoTowerModel model(encoders::EncoderConfig{}, corpus::Vocabulary::for_world(wc), 6);
  for (auto _ : state) benchmark::DoNotOptimize(features::extract_snippet_track(world.clips[0], model, 8, 4));
}
BENCHMARK(BM_SnippetExtraction)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
