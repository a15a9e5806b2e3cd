#include <benchmark/benchmark.h>

#include "sgglc/sgglc.hpp"

using namespace sgglc;

namespace {

template <typename T>
Val<T> leafv(Graph<T>& g, Tensor<T> t) {
  return make_leaf(g, std::move(t), false);
}

void BM_conv3x3(benchmark::State& state) {
  const i64 c = state.range(0), hw = state.range(1);
  Rng rng(1);
  Tensor<float> x(Shape(1, c, hw, hw)), w(Shape(c, c, 3, 3)), b(Shape(1, c, 1, 1));
  fill_uniform(x, -1, 1, rng);
  fill_uniform(w, -0.1, 0.1, rng);
  for (auto _ : state) {
    Graph<float> g(false);
    auto y = ops::conv2d(leafv(g, x), leafv(g, w), leafv(g, b), ops::ConvSpec{1, 1, 1});
    benchmark::DoNotOptimize(y.v().data());
  }
  state.SetItemsProcessed(state.iterations() * c * c * 9 * hw * hw);
}
BENCHMARK(BM_conv3x3)->Args({24, 32})->Args({48, 32})->Args({48, 64});

void BM_shift_conv(benchmark::State& state) {
  const i64 c = 24, hw = state.range(0);
  Rng rng(2);
  Tensor<float> x(Shape(1, c, hw, hw)), w(Shape(c, c, 1, 1)), b(Shape(1, c, 1, 1));
  fill_uniform(x, -1, 1, rng);
  fill_uniform(w, -0.3, 0.3, rng);
  for (auto _ : state) {
    Graph<float> g(false);
    auto y = ops::conv2d(ops::shift8(leafv(g, x), 8), leafv(g, w), leafv(g, b),
                         ops::ConvSpec{1, 0, 1});
    benchmark::DoNotOptimize(y.v().data());
  }
}
BENCHMARK(BM_shift_conv)->Arg(32)->Arg(64);

void BM_bicubic_resize(benchmark::State& state) {
  const i64 hw = state.range(0);
  Rng rng(3);
  Tensor<float> x(Shape(1, 24, hw, hw));
  fill_uniform(x, -1, 1, rng);
  for (auto _ : state) {
    Tensor<float> y = resize_tensor(x, hw * 2, hw * 2, ResizeKernel::bicubic);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_bicubic_resize)->Arg(16)->Arg(32);

void BM_ssim(benchmark::State& state) {
  const i64 hw = state.range(0);
  Rng rng(4);
  Tensor<double> a(Shape(1, 1, hw, hw)), b(Shape(1, 1, hw, hw));
  fill_uniform(a, 0, 255, rng);
  fill_uniform(b, 0, 255, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b, 2));
}
BENCHMARK(BM_ssim)->Arg(64)->Arg(128);

}  // namespace
