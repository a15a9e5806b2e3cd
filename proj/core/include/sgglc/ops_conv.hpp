#pragma once

#include <algorithm>
#include <memory>
#include <vector>

#include "sgglc/autograd.hpp"

namespace sgglc::ops {

struct ConvSpec {
  i64 stride = 1;
  i64 pad = 0;
  i64 groups = 1;
};

// Cross-correlation (no kernel flip), zero padding. weight is
// (c_out, c_in/groups, k, k); bias, when valid, is (1, c_out, 1, 1).
// The backward pass is the exact loop transpose of the forward.
template <typename T>
Val<T> conv2d(Val<T> x, Val<T> weight, Val<T> bias, ConvSpec spec) {
  const Shape sx = x.shape(), sw = weight.shape();
  const i64 k = sw.h;
  if (sw.w != k) throw ShapeError("conv2d: non-square kernel " + sw.str());
  if (spec.groups <= 0 || sx.c % spec.groups != 0 || sw.n % spec.groups != 0)
    throw ShapeError("conv2d: groups=" + std::to_string(spec.groups) + " with c_in=" +
                     std::to_string(sx.c) + ", c_out=" + std::to_string(sw.n));
  if (sw.c != sx.c / spec.groups)
    throw ShapeError("conv2d: weight expects c_in/groups=" + std::to_string(sw.c) +
                     ", input has " + std::to_string(sx.c / spec.groups));
  if (spec.stride <= 0 || spec.pad < 0) throw ShapeError("conv2d: bad stride/pad");
  const i64 oh = (sx.h + 2 * spec.pad - k) / spec.stride + 1;
  const i64 ow = (sx.w + 2 * spec.pad - k) / spec.stride + 1;
  if (oh <= 0 || ow <= 0 || sx.h + 2 * spec.pad < k || sx.w + 2 * spec.pad < k)
    throw ShapeError("conv2d: zero-size output for input " + sx.str() + " kernel " +
                     std::to_string(k));
  if (bias.valid()) {
    const Shape sb = bias.shape();
    if (sb.c != sw.n || sb.n != 1 || sb.h != 1 || sb.w != 1)
      throw ShapeError("conv2d: bias dims " + sb.str());
  }

  Graph<T>& g = *x.g;
  const i64 cin_g = sw.c, cout = sw.n, cout_g = cout / spec.groups;
  Tensor<T> out(Shape(sx.n, cout, oh, ow));
  const Tensor<T>& xv = x.v();
  const Tensor<T>& wv = weight.v();
  const T* bv = bias.valid() ? bias.v().data() : nullptr;
  for (i64 n = 0; n < sx.n; ++n)
    for (i64 co = 0; co < cout; ++co) {
      const i64 grp = co / cout_g;
      for (i64 oy = 0; oy < oh; ++oy)
        for (i64 ox = 0; ox < ow; ++ox) {
          T acc = bv ? bv[co] : T(0);
          for (i64 cg = 0; cg < cin_g; ++cg) {
            const i64 ci = grp * cin_g + cg;
            for (i64 ky = 0; ky < k; ++ky) {
              const i64 iy = oy * spec.stride + ky - spec.pad;
              if (iy < 0 || iy >= sx.h) continue;
              for (i64 kx = 0; kx < k; ++kx) {
                const i64 ix = ox * spec.stride + kx - spec.pad;
                if (ix < 0 || ix >= sx.w) continue;
                acc += wv.at(co, cg, ky, kx) * xv.at(n, ci, iy, ix);
              }
            }
          }
          out.at(n, co, oy, ox) = acc;
        }
    }
  check_finite(out, "conv2d");

  const int xi = x.id, wi = weight.id, bi = bias.valid() ? bias.id : -1;
  std::vector<int> parents{xi, wi};
  if (bi >= 0) parents.push_back(bi);
  int id = g.record(std::move(out), parents,
                    [xi, wi, bi, spec, k, cin_g, cout_g](Graph<T>& gg, int self) {
    const Tensor<T>& dy = gg.grad(self);
    const Tensor<T>& xv = gg.val(xi);
    const Tensor<T>& wv = gg.val(wi);
    const Shape sx = xv.shape(), sd = dy.shape();
    const bool nx = gg.needs_grad(xi), nw = gg.needs_grad(wi);
    const bool nb = bi >= 0 && gg.needs_grad(bi);
    Tensor<T>* dx = nx ? &gg.grad(xi) : nullptr;
    Tensor<T>* dw = nw ? &gg.grad(wi) : nullptr;
    Tensor<T>* db = nb ? &gg.grad(bi) : nullptr;
    for (i64 n = 0; n < sx.n; ++n)
      for (i64 co = 0; co < sd.c; ++co) {
        const i64 grp = co / cout_g;
        for (i64 oy = 0; oy < sd.h; ++oy)
          for (i64 ox = 0; ox < sd.w; ++ox) {
            const T d = dy.at(n, co, oy, ox);
            if (db) (*db)[co] += d;
            if (!nx && !nw) continue;
            for (i64 cg = 0; cg < cin_g; ++cg) {
              const i64 ci = grp * cin_g + cg;
              for (i64 ky = 0; ky < k; ++ky) {
                const i64 iy = oy * spec.stride + ky - spec.pad;
                if (iy < 0 || iy >= sx.h) continue;
                for (i64 kx = 0; kx < k; ++kx) {
                  const i64 ix = ox * spec.stride + kx - spec.pad;
                  if (ix < 0 || ix >= sx.w) continue;
                  if (dx) dx->at(n, ci, iy, ix) += d * wv.at(co, cg, ky, kx);
                  if (dw) dw->at(co, cg, ky, kx) += d * xv.at(n, ci, iy, ix);
                }
              }
            }
          }
      }
  });
  return {&g, id};
}

// One filter per channel (groups == c).
template <typename T>
Val<T> depthwise_conv2d(Val<T> x, Val<T> weight, Val<T> bias, i64 stride, i64 pad) {
  const i64 c = x.shape().c;
  if (weight.shape().n != c || weight.shape().c != 1)
    throw ShapeError("depthwise_conv2d: weight " + weight.shape().str() + " for c=" +
                     std::to_string(c));
  return conv2d(x, weight, bias, ConvSpec{stride, pad, c});
}

// Windowed mean. include_partial keeps ceil-mode windows at the bottom/right
// edge and divides by the actual tap count.
template <typename T>
Val<T> avg_pool(Val<T> x, i64 k, i64 stride, bool include_partial = false) {
  const Shape s = x.shape();
  if (k <= 0 || stride <= 0) throw ShapeError("avg_pool: bad window/stride");
  if (!include_partial && (s.h < k || s.w < k))
    throw ShapeError("avg_pool: window " + std::to_string(k) + " larger than input " + s.str());
  const i64 oh = include_partial ? (s.h + stride - 1) / stride : (s.h - k) / stride + 1;
  const i64 ow = include_partial ? (s.w + stride - 1) / stride : (s.w - k) / stride + 1;
  Graph<T>& g = *x.g;
  Tensor<T> out(Shape(s.n, s.c, oh, ow));
  const Tensor<T>& xv = x.v();
  for (i64 n = 0; n < s.n; ++n)
    for (i64 c = 0; c < s.c; ++c)
      for (i64 oy = 0; oy < oh; ++oy)
        for (i64 ox = 0; ox < ow; ++ox) {
          const i64 y1 = std::min(oy * stride + k, s.h), x1 = std::min(ox * stride + k, s.w);
          T acc = T(0);
          for (i64 y = oy * stride; y < y1; ++y)
            for (i64 xq = ox * stride; xq < x1; ++xq) acc += xv.at(n, c, y, xq);
          const i64 cnt = (y1 - oy * stride) * (x1 - ox * stride);
          out.at(n, c, oy, ox) = acc / static_cast<T>(cnt);
        }
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi, k, stride](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    Tensor<T>& dx = gg.grad(xi);
    const Shape s = dx.shape(), sd = dy.shape();
    for (i64 n = 0; n < s.n; ++n)
      for (i64 c = 0; c < s.c; ++c)
        for (i64 oy = 0; oy < sd.h; ++oy)
          for (i64 ox = 0; ox < sd.w; ++ox) {
            const i64 y1 = std::min(oy * stride + k, s.h), x1 = std::min(ox * stride + k, s.w);
            const i64 cnt = (y1 - oy * stride) * (x1 - ox * stride);
            const T d = dy.at(n, c, oy, ox) / static_cast<T>(cnt);
            for (i64 y = oy * stride; y < y1; ++y)
              for (i64 xq = ox * stride; xq < x1; ++xq) dx.at(n, c, y, xq) += d;
          }
  });
  return {&g, id};
}

// Strided max over k x k windows. Ties route the gradient to the first
// (row-major) maximum, keeping backward deterministic.
template <typename T>
Val<T> max_pool(Val<T> x, i64 k, i64 stride) {
  const Shape s = x.shape();
  if (k <= 0 || stride <= 0) throw ShapeError("max_pool: bad window/stride");
  if (s.h < k || s.w < k)
    throw ShapeError("max_pool: window " + std::to_string(k) + " larger than input " + s.str());
  const i64 oh = (s.h - k) / stride + 1, ow = (s.w - k) / stride + 1;
  Graph<T>& g = *x.g;
  Tensor<T> out(Shape(s.n, s.c, oh, ow));
  auto argmax = std::make_shared<std::vector<i64>>(static_cast<size_t>(out.count()));
  const Tensor<T>& xv = x.v();
  i64 oi = 0;
  for (i64 n = 0; n < s.n; ++n)
    for (i64 c = 0; c < s.c; ++c)
      for (i64 oy = 0; oy < oh; ++oy)
        for (i64 ox = 0; ox < ow; ++ox, ++oi) {
          T best = xv.at(n, c, oy * stride, ox * stride);
          i64 bidx = xv.index(n, c, oy * stride, ox * stride);
          for (i64 y = oy * stride; y < oy * stride + k; ++y)
            for (i64 xq = ox * stride; xq < ox * stride + k; ++xq) {
              const T v = xv.at(n, c, y, xq);
              if (v > best) {
                best = v;
                bidx = xv.index(n, c, y, xq);
              }
            }
          out[oi] = best;
          (*argmax)[static_cast<size_t>(oi)] = bidx;
        }
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi, argmax](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    Tensor<T>& dx = gg.grad(xi);
    for (i64 i = 0; i < dy.count(); ++i) dx[(*argmax)[static_cast<size_t>(i)]] += dy[i];
  });
  return {&g, id};
}

}  // namespace sgglc::ops
