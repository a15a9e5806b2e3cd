#pragma once

#include <cmath>

#include "sgglc/tensor.hpp"

namespace sgglc {

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  i64 crop_border = 0;
};

// Equal inputs report a documented 99 dB cap instead of infinity.
inline constexpr double kPsnrCap = 99.0;

namespace detail {

inline Tensor<double> crop_border_plane(const Tensor<double>& t, i64 crop) {
  const Shape s = t.shape();
  if (crop < 0) throw ShapeError("metrics: negative crop");
  if (s.h <= 2 * crop || s.w <= 2 * crop)
    throw ShapeError("metrics: crop " + std::to_string(crop) + " leaves no pixels of " + s.str());
  if (crop == 0) return t;
  Tensor<double> out(Shape(s.n, s.c, s.h - 2 * crop, s.w - 2 * crop));
  for (i64 n = 0; n < s.n; ++n)
    for (i64 c = 0; c < s.c; ++c)
      for (i64 y = 0; y < out.shape().h; ++y)
        for (i64 x = 0; x < out.shape().w; ++x)
          out.at(n, c, y, x) = t.at(n, c, y + crop, x + crop);
  return out;
}

}  // namespace detail

// PSNR over [0,255]-domain planes: 10 log10(255^2 / MSE) after border crop.
inline double psnr(const Tensor<double>& a, const Tensor<double>& b, i64 crop) {
  if (a.shape() != b.shape())
    throw ShapeError("psnr: dims " + a.shape().str() + " vs " + b.shape().str());
  const Tensor<double> ca = detail::crop_border_plane(a, crop);
  const Tensor<double> cb = detail::crop_border_plane(b, crop);
  double mse = 0.0;
  for (i64 i = 0; i < ca.count(); ++i) {
    const double d = ca[i] - cb[i];
    mse += d * d;
  }
  mse /= static_cast<double>(ca.count());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

// Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), C1=(0.01*255)^2,
// C2=(0.03*255)^2, mean over valid window positions.
inline double ssim(const Tensor<double>& a, const Tensor<double>& b, i64 crop) {
  if (a.shape() != b.shape())
    throw ShapeError("ssim: dims " + a.shape().str() + " vs " + b.shape().str());
  const Tensor<double> ca = detail::crop_border_plane(a, crop);
  const Tensor<double> cb = detail::crop_border_plane(b, crop);
  const Shape s = ca.shape();
  constexpr i64 kWin = 11;
  constexpr double kSigma = 1.5;
  if (s.h < kWin || s.w < kWin)
    throw ShapeError("ssim: cropped image smaller than the 11x11 window");

  double win[kWin][kWin];
  double wsum = 0.0;
  for (i64 y = 0; y < kWin; ++y)
    for (i64 x = 0; x < kWin; ++x) {
      const double dy = static_cast<double>(y - kWin / 2);
      const double dx = static_cast<double>(x - kWin / 2);
      win[y][x] = std::exp(-(dy * dy + dx * dx) / (2.0 * kSigma * kSigma));
      wsum += win[y][x];
    }
  for (i64 y = 0; y < kWin; ++y)
    for (i64 x = 0; x < kWin; ++x) win[y][x] /= wsum;

  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  double total = 0.0;
  i64 positions = 0;
  for (i64 n = 0; n < s.n; ++n)
    for (i64 c = 0; c < s.c; ++c)
      for (i64 y0 = 0; y0 + kWin <= s.h; ++y0)
        for (i64 x0 = 0; x0 + kWin <= s.w; ++x0) {
          double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
          for (i64 y = 0; y < kWin; ++y)
            for (i64 x = 0; x < kWin; ++x) {
              const double va = ca.at(n, c, y0 + y, x0 + x);
              const double vb = cb.at(n, c, y0 + y, x0 + x);
              const double w = win[y][x];
              ma += w * va;
              mb += w * vb;
              saa += w * va * va;
              sbb += w * vb * vb;
              sab += w * va * vb;
            }
          const double var_a = saa - ma * ma;
          const double var_b = sbb - mb * mb;
          const double cov = sab - ma * mb;
          const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
          const double den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
          total += num / den;
          ++positions;
        }
  return total / static_cast<double>(positions);
}

inline MetricReport evaluate_pair(const Tensor<double>& ref_y, const Tensor<double>& test_y,
                                  i64 crop) {
  MetricReport r;
  r.crop_border = crop;
  r.psnr = psnr(ref_y, test_y, crop);
  r.ssim = ssim(ref_y, test_y, crop);
  return r;
}

}  // namespace sgglc
