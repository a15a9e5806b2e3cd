#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sgglc/config.hpp"
#include "sgglc/ops.hpp"
#include "sgglc/params.hpp"
#include "sgglc/rng.hpp"

// Block definitions. A def carries names and dims only; init() allocates
// parameters into a store, fwd() composes differentiable primitives, and
// stats() mirrors fwd() analytically (conv and matmul multiply-adds only;
// resampling, pooling, normalization and activations contribute none).

namespace sgglc {

struct StatPair {
  i64 params = 0;
  i64 macs = 0;
  StatPair& operator+=(const StatPair& o) {
    params += o.params;
    macs += o.macs;
    return *this;
  }
};

struct ConvDef {
  std::string name;
  i64 cin = 0, cout = 0, k = 1, stride = 1, pad = -1, groups = 1;
  bool bias = true;

  i64 padding() const { return pad >= 0 ? pad : (k - 1) / 2; }

  void out_dims(i64 h, i64 w, i64& oh, i64& ow) const {
    oh = (h + 2 * padding() - k) / stride + 1;
    ow = (w + 2 * padding() - k) / stride + 1;
  }

  i64 param_count() const {
    return cout * (cin / groups) * k * k + (bias ? cout : 0);
  }
  i64 macs(i64 h, i64 w) const {
    i64 oh = 0, ow = 0;
    out_dims(h, w, oh, ow);
    return cout * (cin / groups) * k * k * oh * ow;
  }

  template <typename T>
  void init(ParameterStore<T>& store, Rng& rng, bool trainable = true) const {
    Tensor<T> weight(Shape(cout, cin / groups, k, k));
    kaiming_uniform(weight, (cin / groups) * k * k, rng);
    store.add(name + ".weight", std::move(weight), trainable);
    if (bias) store.add(name + ".bias", Tensor<T>(Shape(1, cout, 1, 1), T(0)), trainable);
  }

  template <typename T>
  Val<T> fwd(ParamCtx<T>& ctx, Val<T> x) const {
    Val<T> b = bias ? ctx.leaf(name + ".bias") : Val<T>{};
    return ops::conv2d(x, ctx.leaf(name + ".weight"), b,
                       ops::ConvSpec{stride, padding(), groups});
  }
};

// Two 3x3 convolutions with a ReLU between, a squeeze-excite channel gate on
// the body, and a residual skip. Disabled FABs are the identity and own no
// parameters.
struct FabDef {
  std::string name;
  i64 channels = 0;
  i64 hidden = 0;
  bool enabled = true;
  ConvDef conv1, conv2, se_reduce, se_expand;

  static FabDef make(const std::string& name, i64 c, i64 hidden, bool enabled) {
    FabDef f;
    f.name = name;
    f.channels = c;
    f.hidden = hidden;
    f.enabled = enabled;
    const i64 se = std::max<i64>(1, c / 4);
    f.conv1 = ConvDef{name + ".conv1", c, hidden, 3};
    f.conv2 = ConvDef{name + ".conv2", hidden, c, 3};
    f.se_reduce = ConvDef{name + ".se_reduce", c, se, 1};
    f.se_expand = ConvDef{name + ".se_expand", se, c, 1};
    return f;
  }

  template <typename T>
  void init(ParameterStore<T>& store, Rng& rng) const {
    if (!enabled) return;
    conv1.init(store, rng);
    conv2.init(store, rng);
    se_reduce.init(store, rng);
    se_expand.init(store, rng);
  }

  template <typename T>
  Val<T> fwd(ParamCtx<T>& ctx, Val<T> x) const {
    if (!enabled) return x;
    Val<T> body = conv2.fwd(ctx, ops::relu(conv1.fwd(ctx, x)));
    Val<T> gate = ops::sigmoid(
        se_expand.fwd(ctx, ops::relu(se_reduce.fwd(ctx, ops::global_avg_pool(body)))));
    return ops::add(x, ops::scale_channels(body, gate));
  }

  StatPair stats(i64 h, i64 w) const {
    if (!enabled) return {};
    StatPair s;
    s.params = conv1.param_count() + conv2.param_count() + se_reduce.param_count() +
               se_expand.param_count();
    s.macs = conv1.macs(h, w) + conv2.macs(h, w) + se_reduce.macs(1, 1) + se_expand.macs(1, 1);
    return s;
  }
};

// First `kept` channels pass unshifted; the rest move one pixel toward the 8
// neighbors in equal groups, then a 1x1 convolution mixes all channels.
struct ShiftConvDef {
  std::string name;
  i64 channels = 0;
  i64 kept = 0;
  ConvDef conv;

  static ShiftConvDef make(const std::string& name, i64 c, double kept_fraction) {
    ShiftConvDef s;
    s.name = name;
    s.channels = c;
    s.kept = static_cast<i64>(std::ceil(kept_fraction * static_cast<double>(c)));
    if (s.kept > c) s.kept = c;
    if ((c - s.kept) % 8 != 0)
      throw ConfigError("ShiftConv " + name + ": " + std::to_string(c - s.kept) +
                        " shifted channels not divisible into 8 groups");
    s.conv = ConvDef{name + ".conv", c, c, 1};
    return s;
  }

  template <typename T>
  void init(ParameterStore<T>& store, Rng& rng) const {
    conv.init(store, rng);
  }

  template <typename T>
  Val<T> fwd(ParamCtx<T>& ctx, Val<T> x) const {
    return conv.fwd(ctx, ops::shift8(x, kept));
  }

  StatPair stats(i64 h, i64 w) const { return {conv.param_count(), conv.macs(h, w)}; }
};

// High-frequency path: x minus its pooled-and-upsampled smooth component,
// enriched by parallel depthwise kernels, then the gated ShiftConv mix.
struct LocalBranchDef {
  std::string name;
  i64 channels = 0;
  i64 pool = 2;
  std::vector<i64> kernels;
  std::vector<ConvDef> dw;  // one per kernel size
  ShiftConvDef sc_main, sc_high;
  ConvDef out_conv;

  static LocalBranchDef make(const std::string& name, i64 c, const ModelConfig& cfg) {
    LocalBranchDef l;
    l.name = name;
    l.channels = c;
    l.pool = cfg.local_pool;
    l.kernels = cfg.local_kernels;
    for (i64 k : l.kernels)
      l.dw.push_back(ConvDef{name + ".dw" + std::to_string(k), c, c, k, 1, -1, c});
    l.sc_main = ShiftConvDef::make(name + ".sc_main", c, cfg.sc_kept_fraction);
    l.sc_high = ShiftConvDef::make(name + ".sc_high", c, cfg.sc_kept_fraction);
    l.out_conv = ConvDef{name + ".out", c, c, 3};
    return l;
  }

  template <typename T>
  void init(ParameterStore<T>& store, Rng& rng) const {
    for (const auto& d : dw) d.init(store, rng);
    sc_main.init(store, rng);
    sc_high.init(store, rng);
    out_conv.init(store, rng);
  }

  template <typename T>
  Val<T> fwd(ParamCtx<T>& ctx, Val<T> x) const {
    const Shape s = x.shape();
    Val<T> down = ops::avg_pool(x, pool, pool);
    Val<T> up = ops::bicubic_resize(down, s.h, s.w);
    Val<T> high = ops::sub(x, up);
    Val<T> multi = dw[0].fwd(ctx, high);
    for (size_t i = 1; i < dw.size(); ++i) multi = ops::add(multi, dw[i].fwd(ctx, high));
    Val<T> gate = ops::sigmoid(ops::add(sc_high.fwd(ctx, multi), x));
    return out_conv.fwd(ctx, ops::mul(sc_main.fwd(ctx, x), gate));
  }

  StatPair stats(i64 h, i64 w) const {
    StatPair s;
    for (const auto& d : dw) {
      s.params += d.param_count();
      s.macs += d.macs(h, w);
    }
    s += sc_main.stats(h, w);
    s += sc_high.stats(h, w);
    s.params += out_conv.param_count();
    s.macs += out_conv.macs(h, w);
    return s;
  }
};

// Windowed self-attention over spatial tokens followed by attention over the
// transposed (channels-as-tokens) layout, sharing one q/k/v projection set,
// with an output projection and residual add.
struct OsaDef {
  std::string name;
  i64 channels = 0;
  i64 window = 8;
  bool spatial = true;
  bool channel = true;
  ConvDef wq, wk, wv, wo;

  static OsaDef make(const std::string& name, i64 d, const ModelConfig& cfg) {
    OsaDef o;
    o.name = name;
    o.channels = d;
    o.window = cfg.osa_window;
    o.spatial = cfg.osa_spatial;
    o.channel = cfg.osa_channel;
    o.wq = ConvDef{name + ".wq", d, d, 1};
    o.wk = ConvDef{name + ".wk", d, d, 1};
    o.wv = ConvDef{name + ".wv", d, d, 1};
    o.wo = ConvDef{name + ".wo", d, d, 1};
    return o;
  }

  i64 effective_window(i64 h, i64 w) const { return std::min(window, std::min(h, w)); }

  template <typename T>
  void init(ParameterStore<T>& store, Rng& rng) const {
    wq.init(store, rng);
    wk.init(store, rng);
    wv.init(store, rng);
    wo.init(store, rng);
  }

  template <typename T>
  Val<T> fwd(ParamCtx<T>& ctx, Val<T> x) const {
    const Shape s = x.shape();
    const i64 ws = effective_window(s.h, s.w);
    const i64 hp = (s.h + ws - 1) / ws * ws;
    const i64 wp = (s.w + ws - 1) / ws * ws;
    Val<T> padded = (hp != s.h || wp != s.w) ? ops::pad_hw(x, 0, hp - s.h, 0, wp - s.w) : x;
    Val<T> win = ops::window_split(padded, ws);
    const i64 nw = win.shape().n;
    const i64 d = channels, ntok = ws * ws;

    Val<T> q = wq.fwd(ctx, win), k = wk.fwd(ctx, win), v = wv.fwd(ctx, win);
    const Shape flat(nw, 1, d, ntok);
    Val<T> qr = ops::reshape(q, flat);
    Val<T> kr = ops::reshape(k, flat);
    Val<T> y = ops::reshape(v, flat);
    if (spatial) {
      Val<T> logits = ops::scalar_mul(ops::matmul(ops::transpose_hw(qr), kr),
                                      static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
      Val<T> attn = ops::softmax_lastdim(logits);       // (nw,1,ntok,ntok), rows sum to 1
      y = ops::matmul(y, ops::transpose_hw(attn));      // V * A^T
    }
    if (channel) {
      Val<T> logits = ops::scalar_mul(ops::matmul(qr, ops::transpose_hw(kr)),
                                      static_cast<T>(1.0 / std::sqrt(static_cast<double>(ntok))));
      Val<T> attn = ops::softmax_lastdim(logits);       // (nw,1,d,d)
      y = ops::matmul(attn, y);
    }
    Val<T> merged = ops::window_merge(ops::reshape(y, Shape(nw, d, ws, ws)), s.n, hp, wp);
    Val<T> out = wo.fwd(ctx, merged);
    if (hp != s.h || wp != s.w) out = ops::crop_hw(out, 0, 0, s.h, s.w);
    return ops::add(x, out);
  }

  StatPair stats(i64 h, i64 w) const {
    const i64 ws = effective_window(h, w);
    const i64 hp = (h + ws - 1) / ws * ws, wp = (w + ws - 1) / ws * ws;
    const i64 nwin = (hp / ws) * (wp / ws);
    const i64 d = channels, ntok = ws * ws;
    StatPair s;
    s.params = wq.param_count() + wk.param_count() + wv.param_count() + wo.param_count();
    s.macs = wq.macs(hp, wp) + wk.macs(hp, wp) + wv.macs(hp, wp) + wo.macs(hp, wp);
    if (spatial) s.macs += nwin * 2 * d * ntok * ntok;   // q^T k and v a^T
    if (channel) s.macs += nwin * 2 * d * d * ntok;      // q k^T and a v
    return s;
  }
};

// Entry 1x1 conv, split in half, attention on one half, pass-through for the
// other, channel concat back; the split keeps attention compute low.
struct GlobalBranchDef {
  std::string name;
  i64 channels = 0;
  ConvDef entry;
  OsaDef osa;

  static GlobalBranchDef make(const std::string& name, i64 c, const ModelConfig& cfg) {
    if (c % 2 != 0) throw ConfigError("global branch width must be even: " + name);
    GlobalBranchDef g;
    g.name = name;
    g.channels = c;
    g.entry = ConvDef{name + ".entry", c, c, 1};
    g.osa = OsaDef::make(name + ".osa", c / 2, cfg);
    return g;
  }

  template <typename T>
  void init(ParameterStore<T>& store, Rng& rng) const {
    entry.init(store, rng);
    osa.init(store, rng);
  }

  template <typename T>
  Val<T> fwd(ParamCtx<T>& ctx, Val<T> x) const {
    Val<T> e = entry.fwd(ctx, x);
    auto halves = ops::split_channels(e, 2);
    Val<T> g1 = osa.fwd(ctx, halves[0]);
    return ops::concat_channels<T>({g1, halves[1]});
  }

  StatPair stats(i64 h, i64 w) const {
    StatPair s{entry.param_count(), entry.macs(h, w)};
    s += osa.stats(h, w);
    return s;
  }
};

// Channel gate driven by per-channel mean plus standard deviation.
struct CcaDef {
  std::string name;
  i64 channels = 0;
  ConvDef reduce, expand;

  static CcaDef make(const std::string& name, i64 c, i64 hidden) {
    CcaDef d;
    d.name = name;
    d.channels = c;
    d.reduce = ConvDef{name + ".reduce", c, hidden, 1};
    d.expand = ConvDef{name + ".expand", hidden, c, 1};
    return d;
  }

  template <typename T>
  void init(ParameterStore<T>& store, Rng& rng) const {
    reduce.init(store, rng);
    expand.init(store, rng);
  }

  template <typename T>
  Val<T> fwd(ParamCtx<T>& ctx, Val<T> x) const {
    Val<T> mean = ops::global_avg_pool(x);
    Val<T> mean_sq = ops::global_avg_pool(ops::mul(x, x));
    Val<T> variance = ops::sub(mean_sq, ops::mul(mean, mean));
    Val<T> stat = ops::add(mean, ops::sqrt_elem(variance));
    Val<T> gate = ops::sigmoid(expand.fwd(ctx, ops::relu(reduce.fwd(ctx, stat))));
    return ops::scale_channels(x, gate);
  }

  StatPair stats(i64, i64) const {
    return {reduce.param_count() + expand.param_count(), reduce.macs(1, 1) + expand.macs(1, 1)};
  }
};

// 1x1 reduce, stride-2 conv, 7x7 stride-3 max pool, 3x3 conv, bilinear
// upsample back, reduced-skip add, 1x1 restore, sigmoid, spatial scale.
// Pool window clamps to the downsampled extent so small inputs stay valid.
struct EsaDef {
  std::string name;
  i64 channels = 0;
  i64 esa_ch = 0;
  ConvDef reduce, stride_conv, body, restore;

  static EsaDef make(const std::string& name, i64 c, i64 e) {
    EsaDef d;
    d.name = name;
    d.channels = c;
    d.esa_ch = e;
    d.reduce = ConvDef{name + ".reduce", c, e, 1};
    d.stride_conv = ConvDef{name + ".stride", e, e, 3, 2, 1};
    d.body = ConvDef{name + ".body", e, e, 3};
    d.restore = ConvDef{name + ".restore", e, c, 1};
    return d;
  }

  static void pool_dims(i64 h, i64 w, i64& k, i64& stride, i64& oh, i64& ow) {
    k = std::min<i64>(7, std::min(h, w));
    stride = std::min<i64>(3, k);
    oh = (h - k) / stride + 1;
    ow = (w - k) / stride + 1;
  }

  template <typename T>
  void init(ParameterStore<T>& store, Rng& rng) const {
    reduce.init(store, rng);
    stride_conv.init(store, rng);
    body.init(store, rng);
    restore.init(store, rng);
  }

  template <typename T>
  Val<T> fwd(ParamCtx<T>& ctx, Val<T> x) const {
    const Shape s = x.shape();
    Val<T> r = reduce.fwd(ctx, x);
    Val<T> down = stride_conv.fwd(ctx, r);
    i64 k = 0, stride = 0, oh = 0, ow = 0;
    pool_dims(down.shape().h, down.shape().w, k, stride, oh, ow);
    Val<T> pooled = ops::max_pool(down, k, stride);
    Val<T> feat = body.fwd(ctx, pooled);
    Val<T> up = ops::bilinear_resize(feat, s.h, s.w);
    Val<T> mask = ops::sigmoid(restore.fwd(ctx, ops::add(up, r)));
    return ops::mul(x, mask);
  }

  StatPair stats(i64 h, i64 w) const {
    StatPair s;
    s.params = reduce.param_count() + stride_conv.param_count() + body.param_count() +
               restore.param_count();
    i64 dh = 0, dw_ = 0;
    stride_conv.out_dims(h, w, dh, dw_);
    i64 k = 0, stride = 0, ph = 0, pw = 0;
    pool_dims(dh, dw_, k, stride, ph, pw);
    s.macs = reduce.macs(h, w) + stride_conv.macs(h, w) + body.macs(ph, pw) +
             restore.macs(h, w);
    return s;
  }
};

// Half the channels through the local branch, half through the global one
// (a disabled branch hands its channels to the other), concat, optional
// closing 1x1 mix.
struct GldebDef {
  std::string name;
  i64 channels = 0;
  bool has_local = true, has_global = true, has_merge = true;
  LocalBranchDef local;
  GlobalBranchDef global;
  ConvDef merge;

  static GldebDef make(const std::string& name, i64 c, const ModelConfig& cfg) {
    GldebDef d;
    d.name = name;
    d.channels = c;
    d.has_local = cfg.local_branch;
    d.has_global = cfg.global_branch;
    d.has_merge = cfg.merge_conv;
    const i64 lw = d.has_global ? c / 2 : c;
    const i64 gw = d.has_local ? c / 2 : c;
    if (d.has_local) d.local = LocalBranchDef::make(name + ".local", lw, cfg);
    if (d.has_global) d.global = GlobalBranchDef::make(name + ".global", gw, cfg);
    if (d.has_merge) d.merge = ConvDef{name + ".merge", c, c, 1};
    return d;
  }

  template <typename T>
  void init(ParameterStore<T>& store, Rng& rng) const {
    if (has_local) local.init(store, rng);
    if (has_global) global.init(store, rng);
    if (has_merge) merge.init(store, rng);
  }

  template <typename T>
  Val<T> fwd(ParamCtx<T>& ctx, Val<T> x) const {
    Val<T> cat;
    if (has_local && has_global) {
      auto halves = ops::split_channels(x, 2);
      Val<T> lo = local.fwd(ctx, halves[0]);
      Val<T> go = global.fwd(ctx, halves[1]);
      cat = ops::concat_channels<T>({lo, go});
    } else if (has_local) {
      cat = local.fwd(ctx, x);
    } else {
      cat = global.fwd(ctx, x);
    }
    return has_merge ? merge.fwd(ctx, cat) : cat;
  }

  StatPair stats(i64 h, i64 w) const {
    StatPair s;
    if (has_local) s += local.stats(h, w);
    if (has_global) s += global.stats(h, w);
    if (has_merge) {
      s.params += merge.param_count();
      s.macs += merge.macs(h, w);
    }
    return s;
  }
};

// Layer norm, chained GLDEBs, 1x1 fusion of their outputs, hybrid attention
// (CCA + ESA), gated residual. Zero parameters make it the exact identity.
struct GlcmDef {
  std::string name;
  i64 channels = 0;
  std::vector<GldebDef> gldebs;
  ConvDef fusion;
  CcaDef cca;
  EsaDef esa;

  static GlcmDef make(const std::string& name, const ModelConfig& cfg) {
    GlcmDef d;
    d.name = name;
    d.channels = cfg.channels;
    for (i64 k = 1; k <= cfg.n_gldeb; ++k)
      d.gldebs.push_back(GldebDef::make(name + ".gldeb" + std::to_string(k), cfg.channels, cfg));
    d.fusion = ConvDef{name + ".fusion", cfg.n_gldeb * cfg.channels, cfg.channels, 1};
    d.cca = CcaDef::make(name + ".cca", cfg.channels, cfg.cca_hidden);
    d.esa = EsaDef::make(name + ".esa", cfg.channels, cfg.esa_channels);
    return d;
  }

  template <typename T>
  void init(ParameterStore<T>& store, Rng& rng) const {
    store.add(name + ".ln.gamma", Tensor<T>(Shape(1, channels, 1, 1), T(1)));
    store.add(name + ".ln.beta", Tensor<T>(Shape(1, channels, 1, 1), T(0)));
    for (const auto& b : gldebs) b.init(store, rng);
    fusion.init(store, rng);
    cca.init(store, rng);
    esa.init(store, rng);
  }

  template <typename T>
  Val<T> fwd(ParamCtx<T>& ctx, Val<T> x) const {
    Val<T> z = ops::layer_norm(x, ctx.leaf(name + ".ln.gamma"), ctx.leaf(name + ".ln.beta"),
                               static_cast<T>(1e-5));
    std::vector<Val<T>> outs;
    Val<T> cur = z;
    for (const auto& b : gldebs) {
      cur = b.fwd(ctx, cur);
      outs.push_back(cur);
    }
    Val<T> fused = fusion.fwd(ctx, ops::concat_channels(outs));
    Val<T> attended = ops::add(cca.fwd(ctx, fused), esa.fwd(ctx, fused));
    return ops::add(x, ops::mul(ops::sigmoid(attended), fused));
  }

  StatPair stats(i64 h, i64 w) const {
    StatPair s;
    s.params += 2 * channels;  // layer norm affine
    for (const auto& b : gldebs) s += b.stats(h, w);
    s.params += fusion.param_count();
    s.macs += fusion.macs(h, w);
    s += cca.stats(h, w);
    s += esa.stats(h, w);
    return s;
  }
};

// Prior pathway and per-injection fusion. The incoming prior map (at LR
// resolution) is pooled back to its native coarse lattice, embedded with a
// 1x1 conv, and bilinearly brought back to feature resolution. Each
// injection concatenates it, refines with FABs, and applies the
// multiplicative prior stream update.
struct SgmDef {
  std::string name;
  i64 channels = 0;
  i64 prior_channels = 0;
  i64 embed_channels = 0;
  i64 grid = 8;
  ConvDef embed;
  ConvDef entry_conv;
  FabDef entry_fab;
  struct Injection {
    i64 glcm_index = 0;
    ConvDef conv;
    FabDef fab;
    FabDef prior_fab;
  };
  std::vector<Injection> injections;

  static SgmDef make(const std::string& name, const ModelConfig& cfg) {
    SgmDef d;
    d.name = name;
    d.channels = cfg.channels;
    d.prior_channels = cfg.prior_channels;
    d.embed_channels = cfg.prior_embed_channels;
    d.grid = cfg.prior_embed_grid;
    d.embed = ConvDef{name + ".embed", cfg.prior_channels, cfg.prior_embed_channels, 1};
    d.entry_conv =
        ConvDef{name + ".entry", cfg.channels + cfg.prior_embed_channels, cfg.channels, 1};
    d.entry_fab = FabDef::make(name + ".fab0", cfg.channels, cfg.fab_hidden, cfg.fab_enabled);
    std::vector<i64> sorted = cfg.prior_injections;
    std::sort(sorted.begin(), sorted.end());
    for (size_t j = 0; j < sorted.size(); ++j) {
      Injection inj;
      inj.glcm_index = sorted[j];
      const std::string p = name + ".inj" + std::to_string(j + 1);
      inj.conv = ConvDef{p + ".conv", cfg.channels + cfg.prior_embed_channels, cfg.channels, 1};
      inj.fab = FabDef::make(p + ".fab", cfg.channels, cfg.fab_hidden, cfg.fab_enabled);
      inj.prior_fab = FabDef::make(p + ".pfab", cfg.channels, cfg.fab_hidden, cfg.fab_enabled);
      d.injections.push_back(inj);
    }
    return d;
  }

  template <typename T>
  void init(ParameterStore<T>& store, Rng& rng) const {
    if (injections.empty()) return;
    embed.init(store, rng);
    entry_conv.init(store, rng);
    entry_fab.init(store, rng);
    for (const auto& inj : injections) {
      inj.conv.init(store, rng);
      inj.fab.init(store, rng);
      inj.prior_fab.init(store, rng);
    }
  }

  template <typename T>
  struct State {
    Val<T> embedded_prior;
    Val<T> prior_stream;  // P_i, updated once per injection
    i64 updates = 0;
  };

  template <typename T>
  State<T> prepare(ParamCtx<T>& ctx, Val<T> f0, Val<T> prior) const {
    const Shape fs = f0.shape();
    const Shape ps = prior.shape();
    if (ps.h != fs.h || ps.w != fs.w)
      throw ShapeError("prior map " + ps.str() + " is not aligned to features " + fs.str());
    if (ps.c != prior_channels)
      throw ConfigError("prior has " + std::to_string(ps.c) + " channels, config expects " +
                        std::to_string(prior_channels));
    Val<T> coarse = ops::avg_pool(prior, grid, grid, /*include_partial=*/true);
    Val<T> emb = embed.fwd(ctx, coarse);
    Val<T> te = ops::bilinear_resize(emb, fs.h, fs.w);
    Val<T> fv0 = entry_conv.fwd(ctx, ops::concat_channels<T>({f0, te}));
    State<T> st;
    st.embedded_prior = te;
    st.prior_stream = entry_fab.fwd(ctx, fv0);
    return st;
  }

  template <typename T>
  Val<T> inject(ParamCtx<T>& ctx, State<T>& st, Val<T> fi, size_t j) const {
    const auto& inj = injections.at(j);
    if (fi.shape() != st.prior_stream.shape())
      throw ShapeError("injection input " + fi.shape().str() + " vs prior stream " +
                       st.prior_stream.shape().str());
    Val<T> fvi = inj.conv.fwd(ctx, ops::concat_channels<T>({fi, st.embedded_prior}));
    Val<T> refined = inj.fab.fwd(ctx, fvi);
    Val<T> out = ops::add(refined, ops::mul(refined, st.prior_stream));
    st.prior_stream = ops::add(st.prior_stream, inj.prior_fab.fwd(ctx, st.prior_stream));
    ++st.updates;
    return out;
  }

  StatPair stats(i64 h, i64 w) const {
    if (injections.empty()) return {};
    StatPair s;
    const i64 gh = (h + grid - 1) / grid, gw = (w + grid - 1) / grid;
    s.params += embed.param_count();
    s.macs += embed.macs(gh, gw);
    s.params += entry_conv.param_count();
    s.macs += entry_conv.macs(h, w);
    s += entry_fab.stats(h, w);
    for (const auto& inj : injections) {
      s.params += inj.conv.param_count();
      s.macs += inj.conv.macs(h, w);
      s += inj.fab.stats(h, w);
      s += inj.prior_fab.stats(h, w);
    }
    return s;
  }
};

}  // namespace sgglc
