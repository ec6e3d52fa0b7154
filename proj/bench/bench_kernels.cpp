// Serial reference vs OpenMP conv kernels on the shapes the desk model uses.
#include <benchmark/benchmark.h>

#include <vector>

#include "sfi/conv_kernels.hpp"
#include "sfi/random.hpp"

namespace {

using sfi::kernels::ConvShape;

// 0: encoder (1 -> 32, K=40, S=20), 1: pointwise (32 -> 16), 2: depthwise (32 groups, K=5).
ConvShape shape_for(int which) {
  ConvShape s;
  s.batch = 4;
  switch (which) {
    case 0: s.in_channels = 1, s.out_channels = 32, s.in_length = 8000, s.kernel_size = 40, s.stride = 20; break;
    case 1: s.in_channels = 32, s.out_channels = 16, s.in_length = 399, s.kernel_size = 1; break;
    default:
      s.in_channels = 32, s.out_channels = 32, s.in_length = 399, s.kernel_size = 5, s.padding = 2, s.groups = 32;
  }
  return s;
}

struct Buffers {
  std::vector<double> x, w, y;
  explicit Buffers(const ConvShape& s) : x(s.x_size()), w(s.w_size()), y(s.y_size()) {
    sfi::Rng rng(1);
    for (auto& v : x) v = rng.uniform(-1, 1);
    for (auto& v : w) v = rng.uniform(-1, 1);
    for (auto& v : y) v = rng.uniform(-1, 1);
  }
};

template <bool Parallel>
void BM_Forward(benchmark::State& state) {
  const auto s = shape_for(static_cast<int>(state.range(0)));
  Buffers b(s);
  for (auto _ : state) {
    if constexpr (Parallel)
      sfi::kernels::conv1d_forward(s, b.x, b.w, b.y);
    else
      sfi::kernels::serial::conv1d_forward(s, b.x, b.w, b.y);
    benchmark::DoNotOptimize(b.y.data());
  }
}

template <bool Parallel>
void BM_BackwardInput(benchmark::State& state) {
  const auto s = shape_for(static_cast<int>(state.range(0)));
  Buffers b(s);
  std::vector<double> gx(s.x_size());
  for (auto _ : state) {
    if constexpr (Parallel)
      sfi::kernels::conv1d_backward_input(s, b.y, b.w, gx);
    else
      sfi::kernels::serial::conv1d_backward_input(s, b.y, b.w, gx);
    benchmark::DoNotOptimize(gx.data());
  }
}

template <bool Parallel>
void BM_BackwardWeight(benchmark::State& state) {
  const auto s = shape_for(static_cast<int>(state.range(0)));
  Buffers b(s);
  std::vector<double> gw(s.w_size());
  for (auto _ : state) {
    if constexpr (Parallel)
      sfi::kernels::conv1d_backward_weight(s, b.x, b.y, gw);
    else
      sfi::kernels::serial::conv1d_backward_weight(s, b.x, b.y, gw);
    benchmark::DoNotOptimize(gw.data());
  }
}

}  // namespace

BENCHMARK(BM_Forward<false>)->Name("forward/serial")->DenseRange(0, 2);
BENCHMARK(BM_Forward<true>)->Name("forward/openmp")->DenseRange(0, 2);
BENCHMARK(BM_BackwardInput<false>)->Name("backward_input/serial")->DenseRange(0, 2);
BENCHMARK(BM_BackwardInput<true>)->Name("backward_input/openmp")->DenseRange(0, 2);
BENCHMARK(BM_BackwardWeight<false>)->Name("backward_weight/serial")->DenseRange(0, 2);
BENCHMARK(BM_BackwardWeight<true>)->Name("backward_weight/openmp")->DenseRange(0, 2);

BENCHMARK_MAIN();
