#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sgglc/autograd.hpp"

// Element-wise, data-movement and matmul primitives. Every op validates its
// input dims, computes the forward value, and registers a backward closure
// that mirrors the forward as an exact transpose.

namespace sgglc::ops {

template <typename T>
void require_same_shape(const Val<T>& a, const Val<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": dims " + a.shape().str() + " vs " + b.shape().str());
}

template <typename T>
Val<T> add(Val<T> a, Val<T> b) {
  require_same_shape(a, b, "add");
  Graph<T>& g = *a.g;
  Tensor<T> out(a.shape());
  const Tensor<T>&av = a.v(), &bv = b.v();
  for (i64 i = 0; i < out.count(); ++i) out[i] = av[i] + bv[i];
  check_finite(out, "add");
  const int ai = a.id, bi = b.id;
  int id = g.record(std::move(out), {ai, bi}, [ai, bi](Graph<T>& gg, int self) {
    const Tensor<T>& dy = gg.grad(self);
    if (gg.needs_grad(ai)) {
      Tensor<T>& da = gg.grad(ai);
      for (i64 i = 0; i < dy.count(); ++i) da[i] += dy[i];
    }
    if (gg.needs_grad(bi)) {
      Tensor<T>& db = gg.grad(bi);
      for (i64 i = 0; i < dy.count(); ++i) db[i] += dy[i];
    }
  });
  return {&g, id};
}

template <typename T>
Val<T> sub(Val<T> a, Val<T> b) {
  require_same_shape(a, b, "sub");
  Graph<T>& g = *a.g;
  Tensor<T> out(a.shape());
  const Tensor<T>&av = a.v(), &bv = b.v();
  for (i64 i = 0; i < out.count(); ++i) out[i] = av[i] - bv[i];
  check_finite(out, "sub");
  const int ai = a.id, bi = b.id;
  int id = g.record(std::move(out), {ai, bi}, [ai, bi](Graph<T>& gg, int self) {
    const Tensor<T>& dy = gg.grad(self);
    if (gg.needs_grad(ai)) {
      Tensor<T>& da = gg.grad(ai);
      for (i64 i = 0; i < dy.count(); ++i) da[i] += dy[i];
    }
    if (gg.needs_grad(bi)) {
      Tensor<T>& db = gg.grad(bi);
      for (i64 i = 0; i < dy.count(); ++i) db[i] -= dy[i];
    }
  });
  return {&g, id};
}

template <typename T>
Val<T> mul(Val<T> a, Val<T> b) {
  require_same_shape(a, b, "mul");
  Graph<T>& g = *a.g;
  Tensor<T> out(a.shape());
  const Tensor<T>&av = a.v(), &bv = b.v();
  for (i64 i = 0; i < out.count(); ++i) out[i] = av[i] * bv[i];
  check_finite(out, "mul");
  const int ai = a.id, bi = b.id;
  int id = g.record(std::move(out), {ai, bi}, [ai, bi](Graph<T>& gg, int self) {
    const Tensor<T>& dy = gg.grad(self);
    const Tensor<T>&xa = gg.val(ai), &xb = gg.val(bi);
    if (gg.needs_grad(ai)) {
      Tensor<T>& da = gg.grad(ai);
      for (i64 i = 0; i < dy.count(); ++i) da[i] += dy[i] * xb[i];
    }
    if (gg.needs_grad(bi)) {
      Tensor<T>& db = gg.grad(bi);
      for (i64 i = 0; i < dy.count(); ++i) db[i] += dy[i] * xa[i];
    }
  });
  return {&g, id};
}

template <typename T>
Val<T> scalar_mul(Val<T> x, T s) {
  Graph<T>& g = *x.g;
  Tensor<T> out(x.shape());
  const Tensor<T>& xv = x.v();
  for (i64 i = 0; i < out.count(); ++i) out[i] = xv[i] * s;
  check_finite(out, "scalar_mul");
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi, s](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    Tensor<T>& dx = gg.grad(xi);
    for (i64 i = 0; i < dy.count(); ++i) dx[i] += dy[i] * s;
  });
  return {&g, id};
}

template <typename T>
Val<T> sigmoid(Val<T> x) {
  Graph<T>& g = *x.g;
  Tensor<T> out(x.shape());
  const Tensor<T>& xv = x.v();
  for (i64 i = 0; i < out.count(); ++i) out[i] = T(1) / (T(1) + std::exp(-xv[i]));
  check_finite(out, "sigmoid");
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    const Tensor<T>& y = gg.val(self);
    Tensor<T>& dx = gg.grad(xi);
    for (i64 i = 0; i < dy.count(); ++i) dx[i] += dy[i] * y[i] * (T(1) - y[i]);
  });
  return {&g, id};
}

template <typename T>
Val<T> relu(Val<T> x) {
  Graph<T>& g = *x.g;
  Tensor<T> out(x.shape());
  const Tensor<T>& xv = x.v();
  for (i64 i = 0; i < out.count(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    const Tensor<T>& xv = gg.val(xi);
    Tensor<T>& dx = gg.grad(xi);
    for (i64 i = 0; i < dy.count(); ++i)
      if (xv[i] > T(0)) dx[i] += dy[i];
  });
  return {&g, id};
}

// Element-wise sqrt of max(x, 0). Gradient at x <= 0 is defined as 0 so a
// zero-variance channel cannot poison training with NaNs.
template <typename T>
Val<T> sqrt_elem(Val<T> x) {
  Graph<T>& g = *x.g;
  Tensor<T> out(x.shape());
  const Tensor<T>& xv = x.v();
  for (i64 i = 0; i < out.count(); ++i) out[i] = xv[i] > T(0) ? std::sqrt(xv[i]) : T(0);
  check_finite(out, "sqrt");
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    const Tensor<T>& y = gg.val(self);
    Tensor<T>& dx = gg.grad(xi);
    for (i64 i = 0; i < dy.count(); ++i)
      if (y[i] > T(0)) dx[i] += dy[i] / (T(2) * y[i]);
  });
  return {&g, id};
}

template <typename T>
Val<T> concat_channels(const std::vector<Val<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  Graph<T>& g = *xs[0].g;
  const Shape s0 = xs[0].shape();
  i64 ctotal = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      throw ShapeError("concat_channels: incompatible dims " + s.str() + " vs " + s0.str());
    ctotal += s.c;
  }
  Tensor<T> out(Shape(s0.n, ctotal, s0.h, s0.w));
  const i64 plane = s0.h * s0.w;
  std::vector<int> parents;
  i64 coff = 0;
  for (const auto& x : xs) {
    const Tensor<T>& xv = x.v();
    const i64 xc = xv.shape().c;
    for (i64 n = 0; n < s0.n; ++n)
      std::copy(xv.data() + n * xc * plane, xv.data() + (n + 1) * xc * plane,
                out.data() + (n * ctotal + coff) * plane);
    coff += xc;
    parents.push_back(x.id);
  }
  std::vector<i64> cs;
  for (const auto& x : xs) cs.push_back(x.shape().c);
  int id = g.record(std::move(out), parents, [parents, cs, plane, ctotal](Graph<T>& gg, int self) {
    const Tensor<T>& dy = gg.grad(self);
    const i64 nb = dy.shape().n;
    i64 coff = 0;
    for (size_t k = 0; k < parents.size(); ++k) {
      if (gg.needs_grad(parents[k])) {
        Tensor<T>& dx = gg.grad(parents[k]);
        for (i64 n = 0; n < nb; ++n) {
          const T* src = dy.data() + (n * ctotal + coff) * plane;
          T* dst = dx.data() + n * cs[k] * plane;
          for (i64 i = 0; i < cs[k] * plane; ++i) dst[i] += src[i];
        }
      }
      coff += cs[k];
    }
  });
  return {&g, id};
}

template <typename T>
Val<T> slice_channels(Val<T> x, i64 c0, i64 len) {
  const Shape s = x.shape();
  if (c0 < 0 || len <= 0 || c0 + len > s.c)
    throw ShapeError("slice_channels: range [" + std::to_string(c0) + "," +
                     std::to_string(c0 + len) + ") of c=" + std::to_string(s.c));
  Graph<T>& g = *x.g;
  Tensor<T> out(Shape(s.n, len, s.h, s.w));
  const Tensor<T>& xv = x.v();
  const i64 plane = s.h * s.w;
  for (i64 n = 0; n < s.n; ++n)
    std::copy(xv.data() + (n * s.c + c0) * plane, xv.data() + (n * s.c + c0 + len) * plane,
              out.data() + n * len * plane);
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi, c0, len, plane](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    Tensor<T>& dx = gg.grad(xi);
    const i64 cx = dx.shape().c;
    for (i64 n = 0; n < dy.shape().n; ++n) {
      const T* src = dy.data() + n * len * plane;
      T* dst = dx.data() + (n * cx + c0) * plane;
      for (i64 i = 0; i < len * plane; ++i) dst[i] += src[i];
    }
  });
  return {&g, id};
}

// Splits the channel axis into equal parts.
template <typename T>
std::vector<Val<T>> split_channels(Val<T> x, int parts) {
  const i64 c = x.shape().c;
  if (parts <= 0 || c % parts != 0)
    throw ShapeError("split_channels: c=" + std::to_string(c) + " into " + std::to_string(parts));
  std::vector<Val<T>> out;
  const i64 step = c / parts;
  for (int p = 0; p < parts; ++p) out.push_back(slice_channels(x, p * step, step));
  return out;
}

// Same element order, different dims. Copying keeps node values independent.
template <typename T>
Val<T> reshape(Val<T> x, Shape s) {
  if (s.count() != x.shape().count())
    throw ShapeError("reshape: count mismatch " + x.shape().str() + " -> " + s.str());
  Graph<T>& g = *x.g;
  Tensor<T> out(s, x.v().vec());
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    Tensor<T>& dx = gg.grad(xi);
    for (i64 i = 0; i < dy.count(); ++i) dx[i] += dy[i];
  });
  return {&g, id};
}

template <typename T>
Val<T> transpose_hw(Val<T> x) {
  const Shape s = x.shape();
  Graph<T>& g = *x.g;
  Tensor<T> out(Shape(s.n, s.c, s.w, s.h));
  const Tensor<T>& xv = x.v();
  for (i64 n = 0; n < s.n; ++n)
    for (i64 c = 0; c < s.c; ++c)
      for (i64 y = 0; y < s.h; ++y)
        for (i64 xq = 0; xq < s.w; ++xq) out.at(n, c, xq, y) = xv.at(n, c, y, xq);
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    Tensor<T>& dx = gg.grad(xi);
    const Shape sd = dy.shape();
    for (i64 n = 0; n < sd.n; ++n)
      for (i64 c = 0; c < sd.c; ++c)
        for (i64 y = 0; y < sd.h; ++y)
          for (i64 xq = 0; xq < sd.w; ++xq) dx.at(n, c, xq, y) += dy.at(n, c, y, xq);
  });
  return {&g, id};
}

template <typename T>
Val<T> pad_hw(Val<T> x, i64 top, i64 bottom, i64 left, i64 right) {
  if (top < 0 || bottom < 0 || left < 0 || right < 0) throw ShapeError("pad_hw: negative pad");
  const Shape s = x.shape();
  Graph<T>& g = *x.g;
  Tensor<T> out(Shape(s.n, s.c, s.h + top + bottom, s.w + left + right), T(0));
  const Tensor<T>& xv = x.v();
  for (i64 n = 0; n < s.n; ++n)
    for (i64 c = 0; c < s.c; ++c)
      for (i64 y = 0; y < s.h; ++y)
        for (i64 xq = 0; xq < s.w; ++xq) out.at(n, c, y + top, xq + left) = xv.at(n, c, y, xq);
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi, top, left](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    Tensor<T>& dx = gg.grad(xi);
    const Shape sx = dx.shape();
    for (i64 n = 0; n < sx.n; ++n)
      for (i64 c = 0; c < sx.c; ++c)
        for (i64 y = 0; y < sx.h; ++y)
          for (i64 xq = 0; xq < sx.w; ++xq) dx.at(n, c, y, xq) += dy.at(n, c, y + top, xq + left);
  });
  return {&g, id};
}

template <typename T>
Val<T> crop_hw(Val<T> x, i64 y0, i64 x0, i64 h, i64 w) {
  const Shape s = x.shape();
  if (y0 < 0 || x0 < 0 || h <= 0 || w <= 0 || y0 + h > s.h || x0 + w > s.w)
    throw ShapeError("crop_hw: window outside input " + s.str());
  Graph<T>& g = *x.g;
  Tensor<T> out(Shape(s.n, s.c, h, w));
  const Tensor<T>& xv = x.v();
  for (i64 n = 0; n < s.n; ++n)
    for (i64 c = 0; c < s.c; ++c)
      for (i64 y = 0; y < h; ++y)
        for (i64 xq = 0; xq < w; ++xq) out.at(n, c, y, xq) = xv.at(n, c, y + y0, xq + x0);
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi, y0, x0](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    Tensor<T>& dx = gg.grad(xi);
    const Shape sd = dy.shape();
    for (i64 n = 0; n < sd.n; ++n)
      for (i64 c = 0; c < sd.c; ++c)
        for (i64 y = 0; y < sd.h; ++y)
          for (i64 xq = 0; xq < sd.w; ++xq) dx.at(n, c, y + y0, xq + x0) += dy.at(n, c, y, xq);
  });
  return {&g, id};
}

// (n, c, H, W) -> (n*nwin, c, ws, ws); H and W must be multiples of ws.
// Window order is row-major within each batch element.
template <typename T>
Val<T> window_split(Val<T> x, i64 ws) {
  const Shape s = x.shape();
  if (ws <= 0 || s.h % ws != 0 || s.w % ws != 0)
    throw ShapeError("window_split: dims " + s.str() + " not multiple of " + std::to_string(ws));
  const i64 gy = s.h / ws, gx = s.w / ws;
  Graph<T>& g = *x.g;
  Tensor<T> out(Shape(s.n * gy * gx, s.c, ws, ws));
  const Tensor<T>& xv = x.v();
  for (i64 n = 0; n < s.n; ++n)
    for (i64 wy = 0; wy < gy; ++wy)
      for (i64 wx = 0; wx < gx; ++wx) {
        const i64 wn = (n * gy + wy) * gx + wx;
        for (i64 c = 0; c < s.c; ++c)
          for (i64 y = 0; y < ws; ++y)
            for (i64 xq = 0; xq < ws; ++xq)
              out.at(wn, c, y, xq) = xv.at(n, c, wy * ws + y, wx * ws + xq);
      }
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi, ws, gy, gx](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    Tensor<T>& dx = gg.grad(xi);
    const Shape sx = dx.shape();
    for (i64 n = 0; n < sx.n; ++n)
      for (i64 wy = 0; wy < gy; ++wy)
        for (i64 wx = 0; wx < gx; ++wx) {
          const i64 wn = (n * gy + wy) * gx + wx;
          for (i64 c = 0; c < sx.c; ++c)
            for (i64 y = 0; y < ws; ++y)
              for (i64 xq = 0; xq < ws; ++xq)
                dx.at(n, c, wy * ws + y, wx * ws + xq) += dy.at(wn, c, y, xq);
        }
  });
  return {&g, id};
}

template <typename T>
Val<T> window_merge(Val<T> x, i64 n, i64 h, i64 w) {
  const Shape s = x.shape();
  const i64 ws = s.h;
  if (s.w != ws || h % ws != 0 || w % ws != 0 || s.n != n * (h / ws) * (w / ws))
    throw ShapeError("window_merge: cannot merge " + s.str() + " into " +
                     Shape(n, s.c, h, w).str());
  const i64 gy = h / ws, gx = w / ws;
  Graph<T>& g = *x.g;
  Tensor<T> out(Shape(n, s.c, h, w));
  const Tensor<T>& xv = x.v();
  for (i64 b = 0; b < n; ++b)
    for (i64 wy = 0; wy < gy; ++wy)
      for (i64 wx = 0; wx < gx; ++wx) {
        const i64 wn = (b * gy + wy) * gx + wx;
        for (i64 c = 0; c < s.c; ++c)
          for (i64 y = 0; y < ws; ++y)
            for (i64 xq = 0; xq < ws; ++xq)
              out.at(b, c, wy * ws + y, wx * ws + xq) = xv.at(wn, c, y, xq);
      }
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi, ws, gy, gx, n](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    Tensor<T>& dx = gg.grad(xi);
    const i64 cs = dx.shape().c;
    for (i64 b = 0; b < n; ++b)
      for (i64 wy = 0; wy < gy; ++wy)
        for (i64 wx = 0; wx < gx; ++wx) {
          const i64 wn = (b * gy + wy) * gx + wx;
          for (i64 c = 0; c < cs; ++c)
            for (i64 y = 0; y < ws; ++y)
              for (i64 xq = 0; xq < ws; ++xq)
                dx.at(wn, c, y, xq) += dy.at(b, c, wy * ws + y, wx * ws + xq);
        }
  });
  return {&g, id};
}

// 8-direction single-pixel shift. The first `kept` channels pass through;
// the remaining channels form 8 equal contiguous groups, each translated one
// pixel toward its neighbor, vacated border positions zero-filled.
inline constexpr int kShiftDir[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                        {0, 1},   {1, -1}, {1, 0},  {1, 1}};

template <typename T>
Val<T> shift8(Val<T> x, i64 kept) {
  const Shape s = x.shape();
  if (kept < 0 || kept > s.c) throw ShapeError("shift8: kept outside [0, c]");
  const i64 shifted = s.c - kept;
  if (shifted % 8 != 0)
    throw ShapeError("shift8: " + std::to_string(shifted) +
                     " shifted channels do not divide into 8 equal groups");
  const i64 gsz = shifted / 8;
  Graph<T>& g = *x.g;
  Tensor<T> out(s, T(0));
  const Tensor<T>& xv = x.v();
  for (i64 n = 0; n < s.n; ++n) {
    for (i64 c = 0; c < kept; ++c)
      for (i64 y = 0; y < s.h; ++y)
        for (i64 xq = 0; xq < s.w; ++xq) out.at(n, c, y, xq) = xv.at(n, c, y, xq);
    for (i64 grp = 0; grp < 8 && gsz > 0; ++grp) {
      const i64 dy = kShiftDir[grp][0], dx = kShiftDir[grp][1];
      for (i64 c = kept + grp * gsz; c < kept + (grp + 1) * gsz; ++c)
        for (i64 y = 0; y < s.h; ++y) {
          const i64 sy = y - dy;
          if (sy < 0 || sy >= s.h) continue;
          for (i64 xq = 0; xq < s.w; ++xq) {
            const i64 sx = xq - dx;
            if (sx < 0 || sx >= s.w) continue;
            out.at(n, c, y, xq) = xv.at(n, c, sy, sx);
          }
        }
    }
  }
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi, kept, gsz](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dyv = gg.grad(self);
    Tensor<T>& dx = gg.grad(xi);
    const Shape s = dx.shape();
    for (i64 n = 0; n < s.n; ++n) {
      for (i64 c = 0; c < kept; ++c)
        for (i64 y = 0; y < s.h; ++y)
          for (i64 xq = 0; xq < s.w; ++xq) dx.at(n, c, y, xq) += dyv.at(n, c, y, xq);
      for (i64 grp = 0; grp < 8 && gsz > 0; ++grp) {
        const i64 dy = kShiftDir[grp][0], dxo = kShiftDir[grp][1];
        for (i64 c = kept + grp * gsz; c < kept + (grp + 1) * gsz; ++c)
          for (i64 y = 0; y < s.h; ++y) {
            const i64 sy = y - dy;
            if (sy < 0 || sy >= s.h) continue;
            for (i64 xq = 0; xq < s.w; ++xq) {
              const i64 sx = xq - dxo;
              if (sx < 0 || sx >= s.w) continue;
              dx.at(n, c, sy, sx) += dyv.at(n, c, y, xq);
            }
          }
      }
    }
  });
  return {&g, id};
}

// out[n, c, r*i+di, r*j+dj] = in[n, c*r*r + di*r + dj, i, j]
template <typename T>
Val<T> pixel_shuffle(Val<T> x, i64 r) {
  const Shape s = x.shape();
  if (r <= 0 || s.c % (r * r) != 0)
    throw ShapeError("pixel_shuffle: c=" + std::to_string(s.c) + " not divisible by r^2, r=" +
                     std::to_string(r));
  const i64 co = s.c / (r * r);
  Graph<T>& g = *x.g;
  Tensor<T> out(Shape(s.n, co, s.h * r, s.w * r));
  const Tensor<T>& xv = x.v();
  for (i64 n = 0; n < s.n; ++n)
    for (i64 c = 0; c < co; ++c)
      for (i64 di = 0; di < r; ++di)
        for (i64 dj = 0; dj < r; ++dj)
          for (i64 y = 0; y < s.h; ++y)
            for (i64 xq = 0; xq < s.w; ++xq)
              out.at(n, c, r * y + di, r * xq + dj) = xv.at(n, c * r * r + di * r + dj, y, xq);
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi, r, co](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    Tensor<T>& dx = gg.grad(xi);
    const Shape sx = dx.shape();
    for (i64 n = 0; n < sx.n; ++n)
      for (i64 c = 0; c < co; ++c)
        for (i64 di = 0; di < r; ++di)
          for (i64 dj = 0; dj < r; ++dj)
            for (i64 y = 0; y < sx.h; ++y)
              for (i64 xq = 0; xq < sx.w; ++xq)
                dx.at(n, c * r * r + di * r + dj, y, xq) += dy.at(n, c, r * y + di, r * xq + dj);
  });
  return {&g, id};
}

template <typename T>
Val<T> pixel_unshuffle(Val<T> x, i64 r) {
  const Shape s = x.shape();
  if (r <= 0 || s.h % r != 0 || s.w % r != 0)
    throw ShapeError("pixel_unshuffle: dims " + s.str() + " not divisible by r=" + std::to_string(r));
  Graph<T>& g = *x.g;
  Tensor<T> out(Shape(s.n, s.c * r * r, s.h / r, s.w / r));
  const Tensor<T>& xv = x.v();
  const Shape so = out.shape();
  for (i64 n = 0; n < s.n; ++n)
    for (i64 c = 0; c < s.c; ++c)
      for (i64 di = 0; di < r; ++di)
        for (i64 dj = 0; dj < r; ++dj)
          for (i64 y = 0; y < so.h; ++y)
            for (i64 xq = 0; xq < so.w; ++xq)
              out.at(n, c * r * r + di * r + dj, y, xq) = xv.at(n, c, r * y + di, r * xq + dj);
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi, r](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    Tensor<T>& dx = gg.grad(xi);
    const Shape sx = dx.shape();
    const Shape sd = dy.shape();
    for (i64 n = 0; n < sx.n; ++n)
      for (i64 c = 0; c < sx.c; ++c)
        for (i64 di = 0; di < r; ++di)
          for (i64 dj = 0; dj < r; ++dj)
            for (i64 y = 0; y < sd.h; ++y)
              for (i64 xq = 0; xq < sd.w; ++xq)
                dx.at(n, c, r * y + di, r * xq + dj) += dy.at(n, c * r * r + di * r + dj, y, xq);
  });
  return {&g, id};
}

// Batched matrix product over the trailing two axes: (n,c,m,k) x (n,c,k,p).
template <typename T>
Val<T> matmul(Val<T> a, Val<T> b) {
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.c != sb.c || sa.w != sb.h)
    throw ShapeError("matmul: " + sa.str() + " x " + sb.str());
  Graph<T>& g = *a.g;
  const i64 batch = sa.n * sa.c, m = sa.h, k = sa.w, p = sb.w;
  Tensor<T> out(Shape(sa.n, sa.c, m, p), T(0));
  const Tensor<T>&av = a.v(), &bv = b.v();
  for (i64 bt = 0; bt < batch; ++bt) {
    const T* pa = av.data() + bt * m * k;
    const T* pb = bv.data() + bt * k * p;
    T* po = out.data() + bt * m * p;
    for (i64 i = 0; i < m; ++i)
      for (i64 kk = 0; kk < k; ++kk) {
        const T aik = pa[i * k + kk];
        for (i64 j = 0; j < p; ++j) po[i * p + j] += aik * pb[kk * p + j];
      }
  }
  check_finite(out, "matmul");
  const int ai = a.id, bi = b.id;
  int id = g.record(std::move(out), {ai, bi}, [ai, bi, batch, m, k, p](Graph<T>& gg, int self) {
    const Tensor<T>& dy = gg.grad(self);
    const Tensor<T>&av = gg.val(ai), &bv = gg.val(bi);
    if (gg.needs_grad(ai)) {
      Tensor<T>& da = gg.grad(ai);
      for (i64 bt = 0; bt < batch; ++bt) {
        const T* pd = dy.data() + bt * m * p;
        const T* pb = bv.data() + bt * k * p;
        T* pa = da.data() + bt * m * k;
        for (i64 i = 0; i < m; ++i)
          for (i64 j = 0; j < p; ++j) {
            const T d = pd[i * p + j];
            for (i64 kk = 0; kk < k; ++kk) pa[i * k + kk] += d * pb[kk * p + j];
          }
      }
    }
    if (gg.needs_grad(bi)) {
      Tensor<T>& db = gg.grad(bi);
      for (i64 bt = 0; bt < batch; ++bt) {
        const T* pd = dy.data() + bt * m * p;
        const T* pa = av.data() + bt * m * k;
        T* pb = db.data() + bt * k * p;
        for (i64 i = 0; i < m; ++i)
          for (i64 kk = 0; kk < k; ++kk) {
            const T aik = pa[i * k + kk];
            for (i64 j = 0; j < p; ++j) pb[kk * p + j] += aik * pd[i * p + j];
          }
      }
    }
  });
  return {&g, id};
}

// Softmax along the last axis; rows sum to 1.
template <typename T>
Val<T> softmax_lastdim(Val<T> x) {
  const Shape s = x.shape();
  Graph<T>& g = *x.g;
  Tensor<T> out(s);
  const Tensor<T>& xv = x.v();
  const i64 rows = s.n * s.c * s.h, w = s.w;
  for (i64 r = 0; r < rows; ++r) {
    const T* px = xv.data() + r * w;
    T* po = out.data() + r * w;
    T mx = px[0];
    for (i64 i = 1; i < w; ++i) mx = std::max(mx, px[i]);
    T sum = T(0);
    for (i64 i = 0; i < w; ++i) {
      po[i] = std::exp(px[i] - mx);
      sum += po[i];
    }
    for (i64 i = 0; i < w; ++i) po[i] /= sum;
  }
  check_finite(out, "softmax");
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi, rows, w](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    const Tensor<T>& y = gg.val(self);
    Tensor<T>& dx = gg.grad(xi);
    for (i64 r = 0; r < rows; ++r) {
      const T* pd = dy.data() + r * w;
      const T* py = y.data() + r * w;
      T* px = dx.data() + r * w;
      T dot = T(0);
      for (i64 i = 0; i < w; ++i) dot += pd[i] * py[i];
      for (i64 i = 0; i < w; ++i) px[i] += py[i] * (pd[i] - dot);
    }
  });
  return {&g, id};
}

// Spatial mean per channel -> (n, c, 1, 1).
template <typename T>
Val<T> global_avg_pool(Val<T> x) {
  const Shape s = x.shape();
  Graph<T>& g = *x.g;
  Tensor<T> out(Shape(s.n, s.c, 1, 1));
  const Tensor<T>& xv = x.v();
  const i64 plane = s.h * s.w;
  for (i64 nc = 0; nc < s.n * s.c; ++nc) {
    T sum = T(0);
    const T* p = xv.data() + nc * plane;
    for (i64 i = 0; i < plane; ++i) sum += p[i];
    out[nc] = sum / static_cast<T>(plane);
  }
  const int xi = x.id;
  int id = g.record(std::move(out), {xi}, [xi, plane](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    Tensor<T>& dx = gg.grad(xi);
    const i64 ncs = dy.count();
    for (i64 nc = 0; nc < ncs; ++nc) {
      const T d = dy[nc] / static_cast<T>(plane);
      T* p = dx.data() + nc * plane;
      for (i64 i = 0; i < plane; ++i) p[i] += d;
    }
  });
  return {&g, id};
}

// x (n,c,h,w) scaled per channel by gate (n,c,1,1).
template <typename T>
Val<T> scale_channels(Val<T> x, Val<T> gate) {
  const Shape s = x.shape(), sg = gate.shape();
  if (sg.n != s.n || sg.c != s.c || sg.h != 1 || sg.w != 1)
    throw ShapeError("scale_channels: gate " + sg.str() + " vs x " + s.str());
  Graph<T>& g = *x.g;
  Tensor<T> out(s);
  const Tensor<T>&xv = x.v(), &gv = gate.v();
  const i64 plane = s.h * s.w;
  for (i64 nc = 0; nc < s.n * s.c; ++nc) {
    const T gk = gv[nc];
    const T* p = xv.data() + nc * plane;
    T* po = out.data() + nc * plane;
    for (i64 i = 0; i < plane; ++i) po[i] = p[i] * gk;
  }
  const int xi = x.id, gi = gate.id;
  int id = g.record(std::move(out), {xi, gi}, [xi, gi, plane](Graph<T>& gg, int self) {
    const Tensor<T>& dy = gg.grad(self);
    const Tensor<T>&xv = gg.val(xi), &gv = gg.val(gi);
    const i64 ncs = gv.count();
    if (gg.needs_grad(xi)) {
      Tensor<T>& dx = gg.grad(xi);
      for (i64 nc = 0; nc < ncs; ++nc) {
        const T gk = gv[nc];
        const T* pd = dy.data() + nc * plane;
        T* px = dx.data() + nc * plane;
        for (i64 i = 0; i < plane; ++i) px[i] += pd[i] * gk;
      }
    }
    if (gg.needs_grad(gi)) {
      Tensor<T>& dg = gg.grad(gi);
      for (i64 nc = 0; nc < ncs; ++nc) {
        const T* pd = dy.data() + nc * plane;
        const T* px = xv.data() + nc * plane;
        T acc = T(0);
        for (i64 i = 0; i < plane; ++i) acc += pd[i] * px[i];
        dg[nc] += acc;
      }
    }
  });
  return {&g, id};
}

// Mean absolute difference -> scalar (1,1,1,1).
template <typename T>
Val<T> l1_loss(Val<T> a, Val<T> b) {
  require_same_shape(a, b, "l1_loss");
  Graph<T>& g = *a.g;
  const Tensor<T>&av = a.v(), &bv = b.v();
  const i64 cnt = av.count();
  T acc = T(0);
  for (i64 i = 0; i < cnt; ++i) acc += std::abs(av[i] - bv[i]);
  Tensor<T> out(Shape(1, 1, 1, 1));
  out[0] = acc / static_cast<T>(cnt);
  check_finite(out, "l1_loss");
  const int ai = a.id, bi = b.id;
  int id = g.record(std::move(out), {ai, bi}, [ai, bi, cnt](Graph<T>& gg, int self) {
    const T d = gg.grad(self)[0] / static_cast<T>(cnt);
    const Tensor<T>&av = gg.val(ai), &bv = gg.val(bi);
    if (gg.needs_grad(ai)) {
      Tensor<T>& da = gg.grad(ai);
      for (i64 i = 0; i < cnt; ++i) {
        const T diff = av[i] - bv[i];
        da[i] += d * (diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0)));
      }
    }
    if (gg.needs_grad(bi)) {
      Tensor<T>& db = gg.grad(bi);
      for (i64 i = 0; i < cnt; ++i) {
        const T diff = av[i] - bv[i];
        db[i] -= d * (diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0)));
      }
    }
  });
  return {&g, id};
}

// Weighted sum against a constant tensor -> scalar. Gives finite-difference
// tests a generic linear functional of any op output.
template <typename T>
Val<T> dot_const(Val<T> x, const Tensor<T>& w) {
  if (x.shape() != w.shape()) throw ShapeError("dot_const: dims mismatch");
  Graph<T>& g = *x.g;
  const Tensor<T>& xv = x.v();
  T acc = T(0);
  for (i64 i = 0; i < xv.count(); ++i) acc += xv[i] * w[i];
  Tensor<T> out(Shape(1, 1, 1, 1));
  out[0] = acc;
  const int xi = x.id;
  Tensor<T> wc = w;
  int id = g.record(std::move(out), {xi}, [xi, wc](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const T d = gg.grad(self)[0];
    Tensor<T>& dx = gg.grad(xi);
    for (i64 i = 0; i < dx.count(); ++i) dx[i] += d * wc[i];
  });
  return {&g, id};
}

}  // namespace sgglc::ops
