#include <benchmark/benchmark.h>

#include "sgglc/sgglc.hpp"

using namespace sgglc;

namespace {

void BM_tiny_forward(benchmark::State& state) {
  const ModelConfig cfg = tiny_config();
  const ModelDef def = make_model(cfg);
  ParameterStore<float> store = build_params<float>(def, 11);
  Rng rng(5);
  const i64 hw = state.range(0);
  Tensor<float> lr(Shape(1, 3, hw, hw));
  fill_uniform(lr, 0, 1, rng);
  Tensor<float> prior(Shape(1, cfg.prior_channels, hw, hw));
  fill_normal(prior, 0, 1, rng);
  for (auto _ : state) {
    Tensor<float> up = run_model(def, store, lr, &prior);
    benchmark::DoNotOptimize(up.data());
  }
}
BENCHMARK(BM_tiny_forward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_tiny_train_step(benchmark::State& state) {
  const ModelConfig cfg = tiny_config();
  const ModelDef def = make_model(cfg);
  ParameterStore<float> store = build_params<float>(def, 11);
  Rng rng(6);
  Tensor<float> lr(Shape(1, 3, 16, 16)), hr(Shape(1, 3, 32, 32));
  fill_uniform(lr, 0, 1, rng);
  fill_uniform(hr, 0, 1, rng);
  Tensor<float> prior(Shape(1, cfg.prior_channels, 16, 16));
  fill_normal(prior, 0, 1, rng);
  AdamState<float> adam;
  for (auto _ : state) {
    Graph<float> g;
    ParamCtx<float> ctx(g, store);
    auto out = model_forward(ctx, def, make_leaf(g, lr, false), make_leaf(g, prior, false));
    auto loss = ops::l1_loss(out, make_leaf(g, hr, false));
    g.backward(loss.id, Tensor<float>(Shape(1, 1, 1, 1), 1.0f));
    ctx.collect_grads();
    adam_step(store, adam, 1e-4);
  }
}
BENCHMARK(BM_tiny_train_step)->Unit(benchmark::kMillisecond);

void BM_default_stats(benchmark::State& state) {
  for (auto _ : state) {
    ModelStats st = model_stats(ModelConfig{}, 1280, 720);
    benchmark::DoNotOptimize(st.multiply_adds);
  }
}
BENCHMARK(BM_default_stats);

}  // namespace

BENCHMARK_MAIN();
