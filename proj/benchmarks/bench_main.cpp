#include <benchmark/benchmark.h>

#include <algorithm>

#include "zsdgen/detector.hpp"
#include "zsdgen/losses.hpp"
#include "zsdgen/metrics.hpp"
#include "zsdgen/models.hpp"

using namespace zsdgen;

namespace {

constexpr std::size_t kSemDim = 8;
constexpr std::size_t kFeatDim = 32;
constexpr std::size_t kHidden = 64;

std::vector<Vector> gaussian_rows(RandomStream& rs, std::size_t n, std::size_t dim) {
  std::vector<Vector> rows;
  for (std::size_t i = 0; i < n; ++i) rows.push_back(sample_gaussian(rs, dim));
  return rows;
}

Box random_box(RandomStream& rs) {
  const double w = rs.uniform(5.0, 30.0);
  const double h = rs.uniform(5.0, 30.0);
  const double x = rs.uniform(0.0, 70.0);
  const double y = rs.uniform(0.0, 70.0);
  return {x, y, x + w, y + h};
}

void BM_GeneratorForward(benchmark::State& state) {
  RandomStream rs(1);
  const GeneratorParams g = GeneratorParams::init(kSemDim, kFeatDim, kHidden, kDefaultSlope, rs);
  const Vector w = sample_gaussian(rs, kSemDim);
  const Vector z = sample_gaussian(rs, kSemDim);
  for (auto _ : state) benchmark::DoNotOptimize(generator_forward(g, w, z));
}
BENCHMARK(BM_GeneratorForward);

void BM_CriticLoss(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  RandomStream rs(2);
  const CriticParams c = CriticParams::init(kFeatDim, kSemDim, kHidden, kDefaultSlope, rs);
  const auto real = gaussian_rows(rs, batch, kFeatDim);
  const auto fake = gaussian_rows(rs, batch, kFeatDim);
  const auto sem = gaussian_rows(rs, batch, kSemDim);
  const auto mix = draw_mix_coefficients(rs, batch, PenaltyMix::Uniform);
  for (auto _ : state) benchmark::DoNotOptimize(critic_loss(c, real, fake, sem, 10.0, mix));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_CriticLoss)->Arg(8)->Arg(64);

void BM_Nms(benchmark::State& state) {
  RandomStream rs(3);
  std::vector<Detection> dets;
  for (std::int64_t i = 0; i < state.range(0); ++i) dets.push_back({0, random_box(rs), 1, rs.uniform()});
  for (auto _ : state) benchmark::DoNotOptimize(nms(dets, 0.5));
}
BENCHMARK(BM_Nms)->Arg(100)->Arg(1000);

void BM_AveragePrecision(benchmark::State& state) {
  RandomStream rs(4);
  std::vector<RankedFlag> ranked;
  for (std::int64_t i = 0; i < state.range(0); ++i) ranked.push_back({rs.uniform(), rs.uniform() < 0.3});
  const auto tp = static_cast<std::size_t>(
      std::count_if(ranked.begin(), ranked.end(), [](const RankedFlag& r) { return r.true_positive; }));
  for (auto _ : state) benchmark::DoNotOptimize(average_precision(ranked, tp + 1));
}
BENCHMARK(BM_AveragePrecision)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
