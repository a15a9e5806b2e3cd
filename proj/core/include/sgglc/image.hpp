#pragma once

#include <string>
#include <vector>

#include "sgglc/ops_resize.hpp"
#include "sgglc/rng.hpp"
#include "sgglc/tensor.hpp"

namespace sgglc {

// 8-bit interleaved raster, 1 (gray) or 3 (RGB) channels.
struct ImageBuffer {
  i64 width = 0;
  i64 height = 0;
  i64 channels = 0;
  std::vector<unsigned char> data;

  ImageBuffer() = default;
  ImageBuffer(i64 w, i64 h, i64 c, unsigned char fill = 0)
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w * h * c), fill) {}

  unsigned char& at(i64 y, i64 x, i64 c) {
    return data[static_cast<size_t>((y * width + x) * channels + c)];
  }
  unsigned char at(i64 y, i64 x, i64 c) const {
    return data[static_cast<size_t>((y * width + x) * channels + c)];
  }
  bool operator==(const ImageBuffer& o) const {
    return width == o.width && height == o.height && channels == o.channels && data == o.data;
  }
};

// PNG (when built with libpng) and binary PPM/PGM. Format is detected from
// the file magic on read and from the extension on write; .ppm/.pgm always
// work, .png requires PNG support.
ImageBuffer load_image(const std::string& path);
void save_image(const ImageBuffer& img, const std::string& path);
bool png_supported();

// ---- conversions ----

template <typename T>
Tensor<T> image_to_tensor(const ImageBuffer& img, bool scale01 = true) {
  Tensor<T> t(Shape(1, img.channels, img.height, img.width));
  const T s = scale01 ? T(1) / T(255) : T(1);
  for (i64 c = 0; c < img.channels; ++c)
    for (i64 y = 0; y < img.height; ++y)
      for (i64 x = 0; x < img.width; ++x)
        t.at(0, c, y, x) = static_cast<T>(img.at(y, x, c)) * s;
  return t;
}

// Clamps to [0, 255] and rounds to 8 bits.
template <typename T>
ImageBuffer tensor_to_image(const Tensor<T>& t, bool scaled01 = true) {
  const Shape s = t.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3))
    throw ShapeError("tensor_to_image expects (1, 1|3, h, w), got " + s.str());
  ImageBuffer img(s.w, s.h, s.c);
  const double k = scaled01 ? 255.0 : 1.0;
  for (i64 c = 0; c < s.c; ++c)
    for (i64 y = 0; y < s.h; ++y)
      for (i64 x = 0; x < s.w; ++x) {
        double v = static_cast<double>(t.at(0, c, y, x)) * k;
        v = v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v);
        img.at(y, x, c) = static_cast<unsigned char>(std::lround(v));
      }
  return img;
}

// ITU-R BT.601 studio-swing luma from [0,1]-scaled RGB, emitted in [0, 255]:
// Y = 16 + 65.481 R + 128.553 G + 24.966 B. Grayscale passes through.
inline Tensor<double> rgb_to_y(const ImageBuffer& img) {
  Tensor<double> y(Shape(1, 1, img.height, img.width));
  if (img.channels == 1) {
    for (i64 r = 0; r < img.height; ++r)
      for (i64 c = 0; c < img.width; ++c) y.at(0, 0, r, c) = static_cast<double>(img.at(r, c, 0));
    return y;
  }
  if (img.channels != 3) throw ShapeError("rgb_to_y expects 1 or 3 channels");
  for (i64 r = 0; r < img.height; ++r)
    for (i64 c = 0; c < img.width; ++c) {
      const double rr = img.at(r, c, 0) / 255.0;
      const double gg = img.at(r, c, 1) / 255.0;
      const double bb = img.at(r, c, 2) / 255.0;
      y.at(0, 0, r, c) = 16.0 + 65.481 * rr + 128.553 * gg + 24.966 * bb;
    }
  return y;
}

inline ImageBuffer crop_image(const ImageBuffer& img, i64 y0, i64 x0, i64 h, i64 w) {
  if (y0 < 0 || x0 < 0 || h <= 0 || w <= 0 || y0 + h > img.height || x0 + w > img.width)
    throw ShapeError("crop_image: window outside image");
  ImageBuffer out(w, h, img.channels);
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x)
      for (i64 c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y + y0, x + x0, c);
  return out;
}

inline ImageBuffer crop_to_multiple(const ImageBuffer& img, i64 r) {
  const i64 h = (img.height / r) * r, w = (img.width / r) * r;
  if (h == img.height && w == img.width) return img;
  return crop_image(img, 0, 0, h, w);
}

// Bicubic (antialiased) downscale by r with clamp+round quantization.
inline ImageBuffer degrade_bicubic(const ImageBuffer& hr, i64 r) {
  if (r <= 0) throw ConfigError("degrade: scale must be positive");
  if (hr.height % r != 0 || hr.width % r != 0)
    throw ShapeError("degrade: image " + std::to_string(hr.width) + "x" +
                     std::to_string(hr.height) + " not divisible by scale " + std::to_string(r));
  Tensor<double> t = image_to_tensor<double>(hr, /*scale01=*/false);
  Tensor<double> lr = resize_tensor(t, hr.height / r, hr.width / r, ResizeKernel::bicubic);
  return tensor_to_image(lr, /*scaled01=*/false);
}

// ---- paired augmentation (rotation in quarter turns + horizontal flip) ----

inline ImageBuffer rotate90(const ImageBuffer& img, int quarter_turns) {
  int k = ((quarter_turns % 4) + 4) % 4;
  ImageBuffer cur = img;
  while (k-- > 0) {
    ImageBuffer out(cur.height, cur.width, cur.channels);
    // 90 deg counter-clockwise: (y, x) <- (x, H'-1-y) in the source
    for (i64 y = 0; y < out.height; ++y)
      for (i64 x = 0; x < out.width; ++x)
        for (i64 c = 0; c < out.channels; ++c)
          out.at(y, x, c) = cur.at(x, cur.width - 1 - y, c);
    cur = std::move(out);
  }
  return cur;
}

inline ImageBuffer hflip(const ImageBuffer& img) {
  ImageBuffer out(img.width, img.height, img.channels);
  for (i64 y = 0; y < img.height; ++y)
    for (i64 x = 0; x < img.width; ++x)
      for (i64 c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

struct AugmentDraw {
  int quarter_turns = 0;
  bool flip = false;
};

inline AugmentDraw draw_augment(Rng& rng) {
  AugmentDraw d;
  d.quarter_turns = static_cast<int>(rng.below(4));
  d.flip = rng.below(2) == 1;
  return d;
}

inline ImageBuffer apply_augment(const ImageBuffer& img, const AugmentDraw& d) {
  ImageBuffer out = rotate90(img, d.quarter_turns);
  if (d.flip) out = hflip(out);
  return out;
}

// Identical geometric transform applied to both members of an LR/HR pair.
inline void augment_pair(ImageBuffer& hr, ImageBuffer& lr, Rng& rng) {
  const AugmentDraw d = draw_augment(rng);
  hr = apply_augment(hr, d);
  lr = apply_augment(lr, d);
}

}  // namespace sgglc
