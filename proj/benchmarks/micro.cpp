#include <benchmark/benchmark.h>

#include "xood/data.hpp"
#include "xood/features.hpp"
#include "xood/metrics.hpp"
#include "xood/model.hpp"
#include "xood/power_transform.hpp"
#include "xood/xood_l.hpp"
#include "xood/xood_m.hpp"

using namespace xood;

namespace {

const Network& reference_net() {
  static const Network net = make_reference_cnn({1, 28, 28}, 10, 1);
  return net;
}

const Tensor& batch() {
  static const Tensor t = gen_shapes(64, 2, 28).images;
  return t;
}

Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (auto& v : m.storage()) v = rng.normal();
  return m;
}

void BM_Forward(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(forward(reference_net(), batch()));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Forward);

void BM_ForwardWithTaps(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(forward_with_taps(reference_net(), batch()));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_ForwardWithTaps);

void BM_ExtractMinMax(benchmark::State& state) {
  const auto r = forward_with_taps(reference_net(), batch());
  for (auto _ : state) benchmark::DoNotOptimize(extract(r.trace, FeatureKind::min_max()));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_ExtractMinMax);

void BM_ScoreM(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto det = fit_m(gaussian(4 * d, d, 3));
  const auto x = gaussian(1024, d, 4);
  for (auto _ : state) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) s += score_m(det, x.row(i));
    benchmark::DoNotOptimize(s);
  }
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_ScoreM)->RangeMultiplier(2)->Range(8, 64);

void BM_ScoreL(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto fit = gaussian(200, d, 5);
  LDetector det;
  det.scaler = split_and_scale(fit, fit).scaler;
  Rng rng(6);
  det.weights.resize(2 * d + 1);
  for (auto& w : det.weights) w = rng.normal(0.0, 0.1);
  const auto x = gaussian(1024, d, 7);
  for (auto _ : state) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) s += score_l(det, x.row(i));
    benchmark::DoNotOptimize(s);
  }
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_ScoreL)->RangeMultiplier(2)->Range(8, 64);

void BM_FitPowerTransform(benchmark::State& state) {
  const auto x = gaussian(static_cast<std::size_t>(state.range(0)), 6, 8);
  for (auto _ : state) benchmark::DoNotOptimize(fit_power_transform(x));
}
BENCHMARK(BM_FitPowerTransform)->Arg(1000)->Arg(10000);

void BM_Auroc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(9);
  std::vector<double> id(n), ood(n);
  for (auto& v : id) v = rng.normal(1.0, 1.0);
  for (auto& v : ood) v = rng.normal();
  const auto s = ScoredSet::from(id, ood);
  for (auto _ : state) benchmark::DoNotOptimize(auroc(s));
}
BENCHMARK(BM_Auroc)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
