#include <benchmark/benchmark.h>

#include "bciwalk/decoder.hpp"
#include "bciwalk/online.hpp"
#include "bciwalk/rng.hpp"
#include "bciwalk/spectral.hpp"
#include "bciwalk/stats.hpp"
#include "bciwalk/synth.hpp"

using namespace bciwalk;

namespace {

Eigen::MatrixXd noise(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

const EegRecording& recording() {
  static const EegRecording rec = generate_recording(SynthSpec{}, {30.0, 240.0});
  return rec;
}

const DecodingModel& model() {
  static const DecodingModel m = [] {
    TrainingConfig cfg;
    cfg.methods = {DiscriminantMethod::Lda};
    cfg.cv_runs = 2;
    return train_model(recording(), cfg).model;
  }();
  return m;
}

}  // namespace

// One 0.5-s segment through the online path; must fit well inside 500 ms.
static void BM_ProcessSegment(benchmark::State& state) {
  const OnlineDecoder dec(model());
  const Eigen::MatrixXd seg = recording().samples.middleCols(256 * 31, dec.segment_samples());
  for (auto _ : state) benchmark::DoNotOptimize(dec.process_segment(seg));
}
BENCHMARK(BM_ProcessSegment)->Unit(benchmark::kMicrosecond);

static void BM_PsdBins(benchmark::State& state) {
  const Eigen::MatrixXd x = noise(63, state.range(0), 1);
  for (auto _ : state) benchmark::DoNotOptimize(psd_bins(x, 256.0));
}
BENCHMARK(BM_PsdBins)->Arg(128)->Arg(1024)->Unit(benchmark::kMicrosecond);

static void BM_RandomWalkMc(benchmark::State& state) {
  const FsmConfig fsm{0.40, 0.62};
  for (auto _ : state)
    benchmark::DoNotOptimize(random_walk_mc(fsm, Track::make_default(), static_cast<int>(state.range(0)), 1));
}
BENCHMARK(BM_RandomWalkMc)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_KdeFit(benchmark::State& state) {
  Rng rng(1);
  std::vector<std::array<double, 2>> pts(static_cast<std::size_t>(state.range(0)));
  for (auto& p : pts) p = {rng.normal(), rng.normal()};
  for (auto _ : state) {
    Kde2d kde(pts);
    benchmark::DoNotOptimize(kde.sample_densities().data());
  }
}
BENCHMARK(BM_KdeFit)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

static void BM_KdePValue(benchmark::State& state) {
  Rng rng(1);
  std::vector<std::array<double, 2>> pts(10000);
  for (auto& p : pts) p = {rng.normal(), rng.normal()};
  const Kde2d kde(pts);
  kde.sample_densities();
  for (auto _ : state) benchmark::DoNotOptimize(p_value(kde, {1.0, 0.5}));
}
BENCHMARK(BM_KdePValue)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
