#pragma once

#include <string>
#include <vector>

#include "sgglc/blocks.hpp"

namespace sgglc {

// Whole-network structure: shallow conv, GLCM chain with SGM injections,
// global residual, reconstruction conv + pixel shuffle.
struct ModelDef {
  ModelConfig config;
  ConvDef shallow;
  SgmDef sgm;
  std::vector<GlcmDef> glcms;
  ConvDef recon;
};

inline ModelDef make_model(const ModelConfig& cfg) {
  cfg.validate();
  ModelDef m;
  m.config = cfg;
  m.shallow = ConvDef{"shallow", 3, cfg.channels, 3};
  m.sgm = SgmDef::make("sgm", cfg);
  for (i64 i = 1; i <= cfg.n_glcm; ++i)
    m.glcms.push_back(GlcmDef::make("glcm" + std::to_string(i), cfg));
  m.recon = ConvDef{"recon", cfg.channels, 3 * cfg.scale * cfg.scale, 3};
  return m;
}

// Allocates and initializes every parameter; deterministic for a fixed seed.
template <typename T>
ParameterStore<T> build_params(const ModelDef& def, std::uint64_t seed) {
  ParameterStore<T> store;
  Rng rng(seed);
  def.shallow.init(store, rng);
  def.sgm.init(store, rng);
  for (const auto& g : def.glcms) g.init(store, rng);
  def.recon.init(store, rng);
  return store;
}

template <typename T>
ParameterStore<T> build_params(const ModelConfig& cfg, std::uint64_t seed) {
  return build_params<T>(make_model(cfg), seed);
}

// One super-resolution pass. `prior` is required iff the config injects
// priors; its spatial dims must equal the LR input's.
template <typename T>
Val<T> model_forward(ParamCtx<T>& ctx, const ModelDef& def, Val<T> lr, Val<T> prior = Val<T>{}) {
  const Shape s = lr.shape();
  if (s.c != 3) throw ShapeError("model input must have 3 channels, got " + s.str());
  if (s.h <= 0 || s.w <= 0) throw ShapeError("model input has empty spatial dims");
  const bool wants_prior = !def.sgm.injections.empty();
  if (wants_prior && !prior.valid())
    throw ConfigError("config injects semantic priors but no prior map was supplied");
  if (prior.valid() && prior.shape().n != s.n)
    throw ShapeError("prior batch " + prior.shape().str() + " vs input " + s.str());

  Val<T> f0 = def.shallow.fwd(ctx, lr);
  SgmDef::State<T> sgm_state;
  if (wants_prior) sgm_state = def.sgm.template prepare<T>(ctx, f0, prior);

  Val<T> x = f0;
  size_t next_injection = 0;
  for (size_t i = 0; i < def.glcms.size(); ++i) {
    const i64 glcm_index = static_cast<i64>(i) + 1;
    if (next_injection < def.sgm.injections.size() &&
        def.sgm.injections[next_injection].glcm_index == glcm_index) {
      x = def.sgm.inject(ctx, sgm_state, x, next_injection);
      ++next_injection;
    }
    x = def.glcms[i].fwd(ctx, x);
  }
  Val<T> fused = ops::add(f0, x);  // global residual
  return ops::pixel_shuffle(def.recon.fwd(ctx, fused), def.config.scale);
}

// Convenience wrapper for inference on raw tensors.
template <typename T>
Tensor<T> run_model(const ModelDef& def, ParameterStore<T>& store, const Tensor<T>& lr,
                    const Tensor<T>* prior = nullptr) {
  Graph<T> g(/*recording=*/false);
  ParamCtx<T> ctx(g, store);
  Val<T> lrv = make_leaf(g, lr, false);
  Val<T> pv;
  if (prior != nullptr) pv = make_leaf(g, *prior, false);
  return model_forward(ctx, def, lrv, pv).v();
}

// ---- statistics (Param-count and multiply-adds at a stated output size) ----

struct StatRow {
  std::string module;
  i64 params = 0;
  i64 macs = 0;
};

struct ModelStats {
  i64 param_count = 0;
  i64 multiply_adds = 0;
  i64 out_h = 0, out_w = 0;
  std::vector<StatRow> rows;
};

// Analytic walk mirroring the forward pass at LR resolution
// (out/scale, rounded up when the output size is not a scale multiple).
// Counts conv and matmul multiply-adds.
inline ModelStats model_stats(const ModelConfig& cfg, i64 out_h, i64 out_w) {
  const ModelDef def = make_model(cfg);
  if (out_h <= 0 || out_w <= 0)
    throw ConfigError("stats output size must be positive");
  const i64 h = (out_h + cfg.scale - 1) / cfg.scale;
  const i64 w = (out_w + cfg.scale - 1) / cfg.scale;
  ModelStats st;
  st.out_h = out_h;
  st.out_w = out_w;
  auto push = [&st](const std::string& name, StatPair p) {
    st.rows.push_back(StatRow{name, p.params, p.macs});
    st.param_count += p.params;
    st.multiply_adds += p.macs;
  };
  push("shallow", {def.shallow.param_count(), def.shallow.macs(h, w)});
  push("sgm", def.sgm.stats(h, w));
  for (const auto& g : def.glcms) push(g.name, g.stats(h, w));
  push("reconstruction", {def.recon.param_count(), def.recon.macs(h, w)});
  return st;
}

// Element count over trainable tensors, each counted once.
template <typename T>
i64 count_params(const ParameterStore<T>& store) {
  return store.trainable_count();
}

// ---- checkpoints ----

template <typename T>
void save_checkpoint(const ParameterStore<T>& store, const std::string& dir) {
  save_store(store, dir);
}

template <typename T>
ParameterStore<T> load_checkpoint(const std::string& dir) {
  return load_store<T>(dir);
}

// A checkpoint fits a config iff the name set and every dim match the
// architecture walk.
template <typename T>
void validate_checkpoint(const ModelDef& def, const ParameterStore<T>& store) {
  ParameterStore<T> expect = build_params<T>(def, /*seed=*/0);
  if (expect.size() != store.size())
    throw ConfigError("checkpoint has " + std::to_string(store.size()) + " tensors, config needs " +
                      std::to_string(expect.size()));
  for (const auto& e : expect.entries()) {
    if (!store.has(e.name)) throw ConfigError("checkpoint missing tensor " + e.name);
    const auto& got = store.at(e.name);
    if (got.value.shape() != e.value.shape())
      throw ConfigError("checkpoint tensor " + e.name + " dims " + got.value.shape().str() +
                        " do not match config dims " + e.value.shape().str());
  }
}

}  // namespace sgglc
