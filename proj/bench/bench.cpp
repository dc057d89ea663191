// Serial reference kernels against their OpenMP-parallel counterparts.

#include <benchmark/benchmark.h>

#include "trnav/estimator.hpp"
#include "trnav/flow.hpp"
#include "test_support.hpp"

using namespace trnav;

namespace {

const GrayImage& texture(double dx = 0.0, double dy = 0.0) {
  static const test::WaveTexture tex(42);
  static const GrayImage a = tex.render(640, 480);
  static const GrayImage b = tex.render(640, 480, 5.3, -3.1);
  return (dx == 0.0 && dy == 0.0) ? a : b;
}

const test::Scene& scene() {
  static const test::Scene s = test::random_scene(7, 1.0);
  return s;
}

const ParameterVector& guess() {
  static const ParameterVector g = test::offset_guess(scene().truth, 50.0, 1.0, 7);
  return g;
}

const AnchorSet& anchors() {
  static const AnchorSet a = anchor_features(scene().problem, guess());
  return a;
}

const std::vector<Vec2>& track_points() {
  static const std::vector<Vec2> p = seed_regular_grid(640, 480, 17, 100.0);
  return p;
}

void BM_CornerScoreMap_Reference(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(reference::corner_score_map(texture(), default_window()));
}
void BM_CornerScoreMap_Parallel(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(corner_score_map(texture(), default_window()));
}

void BM_TrackPyramidal_Reference(benchmark::State& st) {
  for (auto _ : st)
    benchmark::DoNotOptimize(reference::track_pyramidal(texture(), texture(1, 1), track_points(), TrackerConfig{}));
}
void BM_TrackPyramidal_Parallel(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(track_pyramidal(texture(), texture(1, 1), track_points(), TrackerConfig{}));
}

void BM_ResidualStack_Reference(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(reference::residual_stack(scene().problem, guess(), anchors()));
}
void BM_ResidualStack_Parallel(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(residual_stack(scene().problem, guess(), anchors()));
}

void BM_Jacobian_Reference(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(reference::jacobian(scene().problem, guess(), anchors()));
}
void BM_Jacobian_Parallel(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(jacobian(scene().problem, guess(), anchors()));
}

}  // namespace

BENCHMARK(BM_CornerScoreMap_Reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CornerScoreMap_Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrackPyramidal_Reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrackPyramidal_Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ResidualStack_Reference)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ResidualStack_Parallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Jacobian_Reference)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Jacobian_Parallel)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
