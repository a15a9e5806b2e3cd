#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "sgglc/autograd.hpp"

namespace sgglc {

enum class ResizeKernel { bicubic, bilinear };

namespace detail {

// Keys cubic, a = -0.5.
inline double keys_cubic(double t) {
  const double a = -0.5;
  t = std::fabs(t);
  if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
  if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
  return 0.0;
}

inline double triangle(double t) {
  t = std::fabs(t);
  return t < 1.0 ? 1.0 - t : 0.0;
}

struct AxisTap {
  i64 first = 0;                // first clamped source index
  std::vector<double> weights;  // normalized; weights.size() taps from `first`
};

// Half-pixel-center mapping with clamp-to-edge sampling. When downscaling the
// kernel support is widened by the scale factor (antialiasing) and weights are
// renormalized so every row sums to exactly 1.
inline std::vector<AxisTap> make_axis_taps(i64 in, i64 out, ResizeKernel kernel) {
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double support = kernel == ResizeKernel::bicubic ? 2.0 : 1.0;
  const double filter_scale = scale > 1.0 ? scale : 1.0;
  const double radius = support * filter_scale;
  std::vector<AxisTap> taps(static_cast<size_t>(out));
  for (i64 o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    i64 lo = static_cast<i64>(std::ceil(src - radius));
    i64 hi = static_cast<i64>(std::floor(src + radius));
    std::vector<double> w;
    double sum = 0.0;
    for (i64 i = lo; i <= hi; ++i) {
      const double t = (static_cast<double>(i) - src) / filter_scale;
      const double v = kernel == ResizeKernel::bicubic ? keys_cubic(t) : triangle(t);
      w.push_back(v);
      sum += v;
    }
    if (sum == 0.0) {  // degenerate tap row; fall back to nearest
      lo = static_cast<i64>(std::llround(src));
      w.assign(1, 1.0);
      sum = 1.0;
    }
    AxisTap& tap = taps[static_cast<size_t>(o)];
    tap.first = lo;
    tap.weights.resize(w.size());
    for (size_t i = 0; i < w.size(); ++i) tap.weights[i] = w[i] / sum;
    // trim zero-weight edges so identity resizes stay single-tap exact
    while (tap.weights.size() > 1 && tap.weights.back() == 0.0) tap.weights.pop_back();
    while (tap.weights.size() > 1 && tap.weights.front() == 0.0) {
      tap.weights.erase(tap.weights.begin());
      ++tap.first;
    }
  }
  return taps;
}

inline i64 clamp_idx(i64 i, i64 n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

}  // namespace detail

// Separable resize of raw tensors (no autograd). Horizontal pass, then
// vertical; the differentiable op below reuses the same tap tables.
template <typename T>
Tensor<T> resize_tensor(const Tensor<T>& x, i64 out_h, i64 out_w, ResizeKernel kernel) {
  const Shape s = x.shape();
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize: zero output dims");
  const auto tx = detail::make_axis_taps(s.w, out_w, kernel);
  const auto ty = detail::make_axis_taps(s.h, out_h, kernel);
  Tensor<T> tmp(Shape(s.n, s.c, s.h, out_w), T(0));
  for (i64 nc = 0; nc < s.n * s.c; ++nc)
    for (i64 y = 0; y < s.h; ++y) {
      const T* row = x.data() + (nc * s.h + y) * s.w;
      T* trow = tmp.data() + (nc * s.h + y) * out_w;
      for (i64 ox = 0; ox < out_w; ++ox) {
        const auto& tap = tx[static_cast<size_t>(ox)];
        double acc = 0.0;
        for (size_t i = 0; i < tap.weights.size(); ++i)
          acc += tap.weights[i] *
                 static_cast<double>(row[detail::clamp_idx(tap.first + static_cast<i64>(i), s.w)]);
        trow[ox] = static_cast<T>(acc);
      }
    }
  Tensor<T> out(Shape(s.n, s.c, out_h, out_w), T(0));
  for (i64 nc = 0; nc < s.n * s.c; ++nc)
    for (i64 oy = 0; oy < out_h; ++oy) {
      const auto& tap = ty[static_cast<size_t>(oy)];
      T* orow = out.data() + (nc * out_h + oy) * out_w;
      for (size_t i = 0; i < tap.weights.size(); ++i) {
        const i64 sy = detail::clamp_idx(tap.first + static_cast<i64>(i), s.h);
        const T* trow = tmp.data() + (nc * s.h + sy) * out_w;
        const double wgt = tap.weights[i];
        for (i64 ox = 0; ox < out_w; ++ox)
          orow[ox] += static_cast<T>(wgt * static_cast<double>(trow[ox]));
      }
    }
  return out;
}

namespace ops {

// Differentiable resize; the same routine serves up- and down-sampling.
template <typename T>
Val<T> resize(Val<T> x, i64 out_h, i64 out_w, ResizeKernel kernel) {
  const Shape s = x.shape();
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize: zero output dims");
  Graph<T>& g = *x.g;
  Tensor<T> out = resize_tensor(x.v(), out_h, out_w, kernel);
  check_finite(out, "resize");
  const int xi = x.id;
  const i64 in_h = s.h, in_w = s.w;
  int id = g.record(std::move(out), {xi}, [xi, in_h, in_w, kernel](Graph<T>& gg, int self) {
    if (!gg.needs_grad(xi)) return;
    const Tensor<T>& dy = gg.grad(self);
    Tensor<T>& dx = gg.grad(xi);
    const Shape sd = dy.shape();
    const auto tx = detail::make_axis_taps(in_w, sd.w, kernel);
    const auto ty = detail::make_axis_taps(in_h, sd.h, kernel);
    // transpose of the two passes: vertical scatter first, then horizontal
    Tensor<T> dtmp(Shape(sd.n, sd.c, in_h, sd.w), T(0));
    for (i64 nc = 0; nc < sd.n * sd.c; ++nc)
      for (i64 oy = 0; oy < sd.h; ++oy) {
        const auto& tap = ty[static_cast<size_t>(oy)];
        const T* drow = dy.data() + (nc * sd.h + oy) * sd.w;
        for (size_t i = 0; i < tap.weights.size(); ++i) {
          const i64 sy = detail::clamp_idx(tap.first + static_cast<i64>(i), in_h);
          T* trow = dtmp.data() + (nc * in_h + sy) * sd.w;
          const double wgt = tap.weights[i];
          for (i64 ox = 0; ox < sd.w; ++ox)
            trow[ox] += static_cast<T>(wgt * static_cast<double>(drow[ox]));
        }
      }
    for (i64 nc = 0; nc < sd.n * sd.c; ++nc)
      for (i64 y = 0; y < in_h; ++y) {
        const T* trow = dtmp.data() + (nc * in_h + y) * sd.w;
        T* xrow = dx.data() + (nc * in_h + y) * in_w;
        for (i64 ox = 0; ox < sd.w; ++ox) {
          const auto& tap = tx[static_cast<size_t>(ox)];
          const double d = static_cast<double>(trow[ox]);
          for (size_t i = 0; i < tap.weights.size(); ++i)
            xrow[detail::clamp_idx(tap.first + static_cast<i64>(i), in_w)] +=
                static_cast<T>(tap.weights[i] * d);
        }
      }
  });
  return {&g, id};
}

template <typename T>
Val<T> bicubic_resize(Val<T> x, i64 out_h, i64 out_w) {
  return resize(x, out_h, out_w, ResizeKernel::bicubic);
}

template <typename T>
Val<T> bilinear_resize(Val<T> x, i64 out_h, i64 out_w) {
  return resize(x, out_h, out_w, ResizeKernel::bilinear);
}

// Normalizes across the channel axis per spatial position, then applies the
// per-channel affine (gamma, beta), each stored as (1, c, 1, 1).
template <typename T>
Val<T> layer_norm(Val<T> x, Val<T> gamma, Val<T> beta, T eps) {
  const Shape s = x.shape();
  const Shape sg = gamma.shape(), sb = beta.shape();
  if (sg.c != s.c || sb.c != s.c || sg.n != 1 || sg.h != 1 || sg.w != 1 || sb != sg)
    throw ShapeError("layer_norm: affine dims " + sg.str() + "/" + sb.str() + " for c=" +
                     std::to_string(s.c));
  Graph<T>& g = *x.g;
  Tensor<T> out(s);
  auto inv_std = std::make_shared<Tensor<T>>(Shape(s.n, 1, s.h, s.w));
  auto xhat = std::make_shared<Tensor<T>>(s);
  const Tensor<T>&xv = x.v(), &gv = gamma.v(), &bv = beta.v();
  const i64 plane = s.h * s.w;
  for (i64 n = 0; n < s.n; ++n)
    for (i64 p = 0; p < plane; ++p) {
      T mean = T(0);
      for (i64 c = 0; c < s.c; ++c) mean += xv[(n * s.c + c) * plane + p];
      mean /= static_cast<T>(s.c);
      T var = T(0);
      for (i64 c = 0; c < s.c; ++c) {
        const T d = xv[(n * s.c + c) * plane + p] - mean;
        var += d * d;
      }
      var /= static_cast<T>(s.c);
      const T istd = T(1) / std::sqrt(var + eps);
      (*inv_std)[n * plane + p] = istd;
      for (i64 c = 0; c < s.c; ++c) {
        const T xh = (xv[(n * s.c + c) * plane + p] - mean) * istd;
        (*xhat)[(n * s.c + c) * plane + p] = xh;
        out[(n * s.c + c) * plane + p] = gv[c] * xh + bv[c];
      }
    }
  check_finite(out, "layer_norm");
  const int xi = x.id, gi = gamma.id, bi = beta.id;
  int id = g.record(std::move(out), {xi, gi, bi},
                    [xi, gi, bi, inv_std, xhat, plane](Graph<T>& gg, int self) {
    const Tensor<T>& dy = gg.grad(self);
    const Tensor<T>& gv = gg.val(gi);
    const Shape s = dy.shape();
    const bool nx = gg.needs_grad(xi);
    Tensor<T>* dx = nx ? &gg.grad(xi) : nullptr;
    Tensor<T>* dg = gg.needs_grad(gi) ? &gg.grad(gi) : nullptr;
    Tensor<T>* db = gg.needs_grad(bi) ? &gg.grad(bi) : nullptr;
    for (i64 n = 0; n < s.n; ++n)
      for (i64 p = 0; p < plane; ++p) {
        T mean_g = T(0), mean_gx = T(0);
        for (i64 c = 0; c < s.c; ++c) {
          const i64 idx = (n * s.c + c) * plane + p;
          const T gd = dy[idx] * gv[c];
          mean_g += gd;
          mean_gx += gd * (*xhat)[idx];
          if (dg) (*dg)[c] += dy[idx] * (*xhat)[idx];
          if (db) (*db)[c] += dy[idx];
        }
        mean_g /= static_cast<T>(s.c);
        mean_gx /= static_cast<T>(s.c);
        if (dx) {
          const T istd = (*inv_std)[n * plane + p];
          for (i64 c = 0; c < s.c; ++c) {
            const i64 idx = (n * s.c + c) * plane + p;
            (*dx)[idx] += istd * (dy[idx] * gv[c] - mean_g - (*xhat)[idx] * mean_gx);
          }
        }
      }
  });
  return {&g, id};
}

}  // namespace ops
}  // namespace sgglc
