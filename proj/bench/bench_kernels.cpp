// Serial reference kernels against their OpenMP counterparts.
//
//   bench_kernels --benchmark_filter=conv
//
// The second range argument of every parallel benchmark is the thread count.

#include <benchmark/benchmark.h>

#include <vector>

#include "dafc/kernels.hpp"
#include "dafc/rng.hpp"

namespace k = dafc::kernels;

namespace {

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  dafc::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void configure(benchmark::State& state, bool parallel) {
  if (parallel) k::set_threads(static_cast<int>(state.range(1)));
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  configure(state, Parallel);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled(n * n, 1), b = filled(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::matmul(a, b, c, n, n, n);
    else k::serial::matmul(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

// MNIST-like first stage: batch × 1 × 28 × 28 input, 8 filters of 3 × 3.
k::ConvGeom conv_geom(std::size_t batch) { return k::make_conv_geom(batch, 1, 28, 28, 8, 3, 3, 1, 1); }

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  configure(state, Parallel);
  const auto g = conv_geom(static_cast<std::size_t>(state.range(0)));
  const auto x = filled(g.batch * g.in_c * g.in_h * g.in_w, 3);
  const auto w = filled(g.out_c * g.in_c * g.kh * g.kw, 4);
  const auto bias = filled(g.out_c, 5);
  std::vector<double> y(g.batch * g.out_c * g.out_h * g.out_w);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::conv2d_forward(g, x, w, bias, y);
    else k::serial::conv2d_forward(g, x, w, bias, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  configure(state, Parallel);
  const auto g = conv_geom(static_cast<std::size_t>(state.range(0)));
  const auto x = filled(g.batch * g.in_c * g.in_h * g.in_w, 3);
  const auto w = filled(g.out_c * g.in_c * g.kh * g.kw, 4);
  const auto dy = filled(g.batch * g.out_c * g.out_h * g.out_w, 6);
  std::vector<double> dx(x.size()), dw(w.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::conv2d_backward_input(g, dy, w, dx);
      k::parallel::conv2d_backward_weight(g, dy, x, dw);
    } else {
      k::serial::conv2d_backward_input(g, dy, w, dx);
      k::serial::conv2d_backward_weight(g, dy, x, dw);
    }
    benchmark::DoNotOptimize(dx.data());
    benchmark::DoNotOptimize(dw.data());
  }
}

template <bool Parallel>
void BM_PairwiseDist(benchmark::State& state) {
  configure(state, Parallel);
  const auto m = static_cast<std::size_t>(state.range(0));
  const std::size_t kc = 10, d = 32;
  const auto a = filled(m * d, 7), b = filled(kc * d, 8);
  std::vector<double> out(m * kc);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::pairwise_sq_dist(a, b, out, m, kc, d);
    else k::serial::pairwise_sq_dist(a, b, out, m, kc, d);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Matmul<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<true>)->ArgsProduct({{64, 256}, {1, 2, 4}});
BENCHMARK(BM_ConvForward<false>)->Arg(64);
BENCHMARK(BM_ConvForward<true>)->ArgsProduct({{64}, {1, 2, 4}});
BENCHMARK(BM_ConvBackward<false>)->Arg(64);
BENCHMARK(BM_ConvBackward<true>)->ArgsProduct({{64}, {1, 2, 4}});
BENCHMARK(BM_PairwiseDist<false>)->Arg(4096);
BENCHMARK(BM_PairwiseDist<true>)->ArgsProduct({{4096}, {1, 2, 4}});

BENCHMARK_MAIN();
