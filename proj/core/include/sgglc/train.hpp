#pragma once

#include <chrono>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sgglc/image.hpp"
#include "sgglc/model.hpp"
#include "sgglc/prior.hpp"

namespace sgglc {

// ---- Adam ----

// Per-parameter first/second moments over trainable tensors only; the shared
// step counter drives bias correction.
template <typename T>
struct AdamState {
  struct Slot {
    Tensor<T> m, v;
  };
  std::map<std::string, Slot> slots;
  i64 step = 0;
};

template <typename T>
void adam_step(ParameterStore<T>& store, AdamState<T>& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (auto& e : store.entries()) {
    if (!e.trainable) continue;
    if (e.grad.empty()) e.grad = Tensor<T>(e.value.shape(), T(0));
    auto it = state.slots.find(e.name);
    if (it == state.slots.end()) {
      it = state.slots
               .emplace(e.name, typename AdamState<T>::Slot{Tensor<T>(e.value.shape(), T(0)),
                                                            Tensor<T>(e.value.shape(), T(0))})
               .first;
    }
    Tensor<T>& m = it->second.m;
    Tensor<T>& v = it->second.v;
    for (i64 i = 0; i < e.value.count(); ++i) {
      const double gi = static_cast<double>(e.grad[i]);
      const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * gi;
      const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      e.value[i] = static_cast<T>(static_cast<double>(e.value[i]) -
                                  lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

// lr0 halved every `halve_every_epochs` epochs.
inline double lr_at(i64 epoch, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(0.5, static_cast<double>(epoch / cfg.halve_every_epochs));
}

// ---- patch sampling ----

struct CorpusEntry {
  std::string name;
  ImageBuffer hr;  // cropped to a multiple of the scale
  ImageBuffer lr;  // degraded once per image
};

struct Corpus {
  std::vector<CorpusEntry> entries;
  i64 scale = 0;
};

inline Corpus make_corpus(const std::vector<std::pair<std::string, ImageBuffer>>& images,
                          i64 scale) {
  Corpus c;
  c.scale = scale;
  for (const auto& [name, img] : images) {
    CorpusEntry e;
    e.name = name;
    e.hr = crop_to_multiple(img, scale);
    if (e.hr.height < scale || e.hr.width < scale)
      throw ShapeError("corpus image too small: " + name);
    e.lr = degrade_bicubic(e.hr, scale);
    c.entries.push_back(std::move(e));
  }
  if (c.entries.empty()) throw ConfigError("corpus is empty");
  return c;
}

template <typename T>
struct Batch {
  Tensor<T> lr;  // (b, 3, p, p)
  Tensor<T> hr;  // (b, 3, rp, rp)
};

template <typename T>
void copy_into_batch(Tensor<T>& dst, i64 slot, const ImageBuffer& img) {
  Tensor<T> t = image_to_tensor<T>(img);
  const Shape s = t.shape();
  std::copy(t.data(), t.data() + s.count(), dst.data() + slot * s.count());
}

// Aligned LR/HR crops (HR crop is scale x the LR crop) with a shared
// rotation/flip draw per sample. Deterministic for a fixed rng state.
template <typename T>
Batch<T> sample_batch(const Corpus& corpus, const TrainConfig& cfg, Rng& rng) {
  const i64 r = corpus.scale, p = cfg.patch;
  Batch<T> batch{Tensor<T>(Shape(cfg.batch, 3, p, p)), Tensor<T>(Shape(cfg.batch, 3, r * p, r * p))};
  for (i64 b = 0; b < cfg.batch; ++b) {
    const CorpusEntry& e = corpus.entries[static_cast<size_t>(rng.below(
        static_cast<i64>(corpus.entries.size())))];
    if (e.lr.height < p || e.lr.width < p)
      throw ShapeError("patch " + std::to_string(p) + " larger than LR image of " + e.name);
    const i64 y0 = rng.below(e.lr.height - p + 1);
    const i64 x0 = rng.below(e.lr.width - p + 1);
    ImageBuffer lr_patch = crop_image(e.lr, y0, x0, p, p);
    ImageBuffer hr_patch = crop_image(e.hr, r * y0, r * x0, r * p, r * p);
    augment_pair(hr_patch, lr_patch, rng);
    if (lr_patch.channels == 1) {  // grayscale corpus images expand to RGB
      ImageBuffer lr3(p, p, 3), hr3(r * p, r * p, 3);
      for (i64 y = 0; y < p; ++y)
        for (i64 x = 0; x < p; ++x)
          for (i64 c = 0; c < 3; ++c) lr3.at(y, x, c) = lr_patch.at(y, x, 0);
      for (i64 y = 0; y < r * p; ++y)
        for (i64 x = 0; x < r * p; ++x)
          for (i64 c = 0; c < 3; ++c) hr3.at(y, x, c) = hr_patch.at(y, x, 0);
      lr_patch = std::move(lr3);
      hr_patch = std::move(hr3);
    }
    copy_into_batch(batch.lr, b, lr_patch);
    copy_into_batch(batch.hr, b, hr_patch);
  }
  return batch;
}

// ---- gradient verification ----

struct GradCheckRow {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  double tolerance = 0.0;
  double max_rel_err = 0.0;
  bool pass = false;
  double seconds = 0.0;
};

// Relative error is measured against the element magnitude, floored at
// 1/1000 of the tensor's gradient scale: components orders of magnitude
// below the tensor's own gradients would otherwise turn finite-difference
// roundoff (the probe moves the loss by ~2h|g|) into spurious failures.
inline double rel_err(double a, double b, double scale_floor = 1e-6) {
  const double denom = std::max({std::fabs(a), std::fabs(b), scale_floor, 1e-6});
  return std::fabs(a - b) / denom;
}

// Shared verdict logic so a deliberately corrupted gradient can be fed
// through the same comparison the real check uses.
inline GradCheckReport compare_grad_tables(
    const std::vector<std::pair<std::string, std::vector<double>>>& analytic,
    const std::vector<std::pair<std::string, std::vector<double>>>& numeric, double tol) {
  GradCheckReport rep;
  rep.tolerance = tol;
  rep.pass = true;
  for (size_t t = 0; t < analytic.size(); ++t) {
    GradCheckRow row;
    row.name = analytic[t].first;
    double scale = 0.0;
    for (size_t i = 0; i < analytic[t].second.size(); ++i)
      scale = std::max({scale, std::fabs(analytic[t].second[i]),
                        std::fabs(numeric[t].second[i])});
    for (size_t i = 0; i < analytic[t].second.size(); ++i)
      row.max_rel_err = std::max(
          row.max_rel_err,
          rel_err(analytic[t].second[i], numeric[t].second[i], 1e-3 * scale));
    row.pass = row.max_rel_err <= tol;
    rep.max_rel_err = std::max(rep.max_rel_err, row.max_rel_err);
    rep.pass = rep.pass && row.pass;
    rep.rows.push_back(row);
  }
  return rep;
}

// Central finite differences (h = 1e-5) of the L1 objective against the
// recorded backward pass, per trainable tensor, in double precision.
// `param_scale` shrinks the evaluation point after init: configs that chain
// many multiplicative prior injections explode at full Kaiming magnitude,
// which drives output sensitivities past margin/h and turns finite
// differences into kink noise. The backward rule is point-independent, so a
// well-conditioned point is the correct place to verify it.
inline GradCheckReport grad_check(const ModelConfig& cfg, double tol = 1e-4,
                                  std::uint64_t seed = 17, i64 input_hw = 8,
                                  double param_scale = 1.0) {
  const auto t_start = std::chrono::steady_clock::now();
  const ModelDef def = make_model(cfg);
  ParameterStore<double> store = build_params<double>(def, seed);
  if (param_scale != 1.0)
    for (auto& e : store.entries())
      for (i64 i = 0; i < e.value.count(); ++i) e.value[i] *= param_scale;
  Rng rng(seed ^ 0x5eedULL);
  Tensor<double> lr(Shape(1, 3, input_hw, input_hw));
  fill_uniform(lr, 0.0, 1.0, rng);
  Tensor<double> prior;
  if (!cfg.prior_injections.empty()) {
    prior = Tensor<double>(Shape(1, cfg.prior_channels, input_hw, input_hw));
    fill_normal(prior, 0.0, 1.0, rng);
  }
  // Target sits a safe margin away from the current output so no |sr - hr|
  // term crosses the L1 kink during the +/-h probes; the measured derivative
  // is then the true one-sided-free derivative everywhere.
  Tensor<double> target(Shape(1, 3, cfg.scale * input_hw, cfg.scale * input_hw));
  {
    Graph<double> g(/*recording=*/false);
    ParamCtx<double> ctx(g, store);
    Val<double> out = model_forward(ctx, def, make_leaf(g, lr, false),
                                    prior.count() ? make_leaf(g, prior, false) : Val<double>{});
    const Tensor<double>& sr0 = out.v();
    for (i64 i = 0; i < target.count(); ++i) {
      const double margin = 0.5 + rng.uniform();
      target[i] = sr0[i] + (rng.below(2) == 0 ? margin : -margin);
    }
  }

  auto eval_loss = [&]() {
    Graph<double> g(/*recording=*/false);
    ParamCtx<double> ctx(g, store);
    Val<double> out = model_forward(ctx, def, make_leaf(g, lr, false),
                                    prior.count() ? make_leaf(g, prior, false) : Val<double>{});
    return ops::l1_loss(out, make_leaf(g, target, false)).v()[0];
  };

  // analytic gradients
  {
    Graph<double> g;
    ParamCtx<double> ctx(g, store);
    Val<double> out = model_forward(ctx, def, make_leaf(g, lr, false),
                                    prior.count() ? make_leaf(g, prior, false) : Val<double>{});
    Val<double> loss = ops::l1_loss(out, make_leaf(g, target, false));
    g.backward(loss.id, Tensor<double>(Shape(1, 1, 1, 1), 1.0));
    ctx.collect_grads();
  }

  std::vector<std::pair<std::string, std::vector<double>>> analytic, numeric;
  const double h = 1e-5;
  for (auto& e : store.entries()) {
    if (!e.trainable) continue;
    std::vector<double> an(static_cast<size_t>(e.value.count()));
    std::vector<double> nu(static_cast<size_t>(e.value.count()));
    for (i64 i = 0; i < e.value.count(); ++i) {
      an[static_cast<size_t>(i)] = e.grad[i];
      const double saved = e.value[i];
      e.value[i] = saved + h;
      const double fp = eval_loss();
      e.value[i] = saved - h;
      const double fm = eval_loss();
      e.value[i] = saved;
      nu[static_cast<size_t>(i)] = (fp - fm) / (2.0 * h);
    }
    analytic.emplace_back(e.name, std::move(an));
    numeric.emplace_back(e.name, std::move(nu));
  }
  GradCheckReport rep = compare_grad_tables(analytic, numeric, tol);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return rep;
}

// ---- desk-scale overfit smoke test ----

struct OverfitResult {
  std::vector<double> losses;  // losses[0] is the pre-update loss
};

// Builds a deterministic synthetic HR/LR pair and runs Adam on the tiny
// model; the L1 trajectory is the oracle.
template <typename T>
OverfitResult overfit_smoke(const ModelConfig& cfg, i64 steps, double lr_rate,
                            std::uint64_t seed, i64 lr_size = 32) {
  const ModelDef def = make_model(cfg);
  ParameterStore<T> store = build_params<T>(def, seed);
  Rng rng(seed ^ 0xf00dULL);

  const i64 r = cfg.scale;
  ImageBuffer hr_img(lr_size * r, lr_size * r, 3);
  for (i64 y = 0; y < hr_img.height; ++y)
    for (i64 x = 0; x < hr_img.width; ++x)
      for (i64 c = 0; c < 3; ++c) {
        const double v = 127.0 + 90.0 * std::sin(0.21 * static_cast<double>(x) +
                                                 0.13 * static_cast<double>(y) +
                                                 1.7 * static_cast<double>(c)) +
                         20.0 * (((x / 4 + y / 4) % 2 == 0) ? 1.0 : -1.0);
        hr_img.at(y, x, c) = static_cast<unsigned char>(std::min(255.0, std::max(0.0, v)));
      }
  ImageBuffer lr_img = degrade_bicubic(hr_img, r);

  Tensor<T> lr = image_to_tensor<T>(lr_img);
  Tensor<T> hr = image_to_tensor<T>(hr_img);
  Tensor<T> prior;
  if (!cfg.prior_injections.empty()) {
    prior = Tensor<T>(Shape(1, cfg.prior_channels, lr_size, lr_size));
    fill_normal(prior, 0.0, 1.0, rng);
  }

  AdamState<T> adam;
  OverfitResult result;
  for (i64 step = 0; step <= steps; ++step) {
    Graph<T> g;
    ParamCtx<T> ctx(g, store);
    Val<T> out = model_forward(ctx, def, make_leaf(g, lr, false),
                               prior.count() ? make_leaf(g, prior, false) : Val<T>{});
    Val<T> loss = ops::l1_loss(out, make_leaf(g, hr, false));
    result.losses.push_back(static_cast<double>(loss.v()[0]));
    if (step == steps) break;
    g.backward(loss.id, Tensor<T>(Shape(1, 1, 1, 1), T(1)));
    ctx.collect_grads();
    adam_step(store, adam, lr_rate);
  }
  return result;
}

}  // namespace sgglc
