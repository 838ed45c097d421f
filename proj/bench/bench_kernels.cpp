// Serial reference kernels against the OpenMP ones, and the attack batch at
// different thread counts. The argument of the parallel cases is the thread
// count.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "freqadv/attacks.hpp"
#include "freqadv/dataset.hpp"
#include "freqadv/kernels.hpp"
#include "freqadv/models.hpp"
#include "freqadv/parallel.hpp"

namespace {

using namespace freqadv;
namespace k = freqadv::kernels;

std::vector<float> noise(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<float> d;
  std::vector<float> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

// The widest conv layer of the baseline at training batch size.
const k::Conv1dShape kConv = k::Conv1dShape::make(128, 64, 64, 64, 3, k::Padding::same);
const k::DenseShape kDense{128, 2048, 128};

struct ConvData {
  std::vector<float> x = noise(kConv.batch * kConv.in_channels * kConv.length, 1);
  std::vector<float> w = noise(kConv.out_channels * kConv.in_channels * kConv.kernel, 2);
  std::vector<float> b = noise(kConv.out_channels, 3);
  std::vector<float> y = std::vector<float>(kConv.batch * kConv.out_channels * kConv.out_length);
};

struct DenseData {
  std::vector<float> x = noise(kDense.batch * kDense.in_features, 4);
  std::vector<float> w = noise(kDense.out_features * kDense.in_features, 5);
  std::vector<float> b = noise(kDense.out_features, 6);
  std::vector<float> y = std::vector<float>(kDense.batch * kDense.out_features);
};

void BM_conv_reference(benchmark::State& state) {
  ConvData d;
  for (auto _ : state) {
    k::reference::conv1d_forward<float>(kConv, d.x, d.w, d.b, d.y);
    benchmark::DoNotOptimize(d.y.data());
  }
}
BENCHMARK(BM_conv_reference)->Unit(benchmark::kMillisecond);

void BM_conv_parallel(benchmark::State& state) {
  set_threads(static_cast<int>(state.range(0)));
  ConvData d;
  for (auto _ : state) {
    k::conv1d_forward<float>(kConv, d.x, d.w, d.b, d.y);
    benchmark::DoNotOptimize(d.y.data());
  }
}
BENCHMARK(BM_conv_parallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

void BM_conv_backward_params_reference(benchmark::State& state) {
  ConvData d;
  std::vector<float> dw(d.w.size()), db(d.b.size());
  for (auto _ : state) {
    k::reference::conv1d_backward_params<float>(kConv, d.y, d.x, dw, db);
    benchmark::DoNotOptimize(dw.data());
  }
}
BENCHMARK(BM_conv_backward_params_reference)->Unit(benchmark::kMillisecond);

void BM_conv_backward_params_parallel(benchmark::State& state) {
  set_threads(static_cast<int>(state.range(0)));
  ConvData d;
  std::vector<float> dw(d.w.size()), db(d.b.size());
  for (auto _ : state) {
    k::conv1d_backward_params<float>(kConv, d.y, d.x, dw, db);
    benchmark::DoNotOptimize(dw.data());
  }
}
BENCHMARK(BM_conv_backward_params_parallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

void BM_dense_reference(benchmark::State& state) {
  DenseData d;
  for (auto _ : state) {
    k::reference::dense_forward<float>(kDense, d.x, d.w, d.b, d.y);
    benchmark::DoNotOptimize(d.y.data());
  }
}
BENCHMARK(BM_dense_reference)->Unit(benchmark::kMillisecond);

void BM_dense_parallel(benchmark::State& state) {
  set_threads(static_cast<int>(state.range(0)));
  DenseData d;
  for (auto _ : state) {
    k::dense_forward<float>(kDense, d.x, d.w, d.b, d.y);
    benchmark::DoNotOptimize(d.y.data());
  }
}
BENCHMARK(BM_dense_parallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

// 16 SFFAA examples on an untrained baseline.
void BM_sffaa_batch(benchmark::State& state) {
  set_threads(static_cast<int>(state.range(0)));
  data::GenerateConfig gc;
  gc.per_cell = 2;
  gc.snrs = {10};
  const auto ds = data::generate_dataset(gc);
  const auto net = models::Network<double>::build(models::Arch::baseline_cnn, 1);
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  attacks::AttackConfig cfg;
  cfg.kind = attacks::AttackKind::sffaa;
  attacks::AttackTargets targets;
  targets.model = &net;
  for (auto _ : state) {
    auto r = attacks::attack_batch(cfg, targets, ds, idx);
    benchmark::DoNotOptimize(r.adversarial.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(idx.size()));
}
BENCHMARK(BM_sffaa_batch)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
