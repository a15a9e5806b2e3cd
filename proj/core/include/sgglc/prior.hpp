#pragma once

#include <string>
#include <vector>

#include "sgglc/image.hpp"
#include "sgglc/model.hpp"

namespace sgglc {

enum class PriorSource { file, extractor };

// Semantic prior map aligned to the LR input's spatial size.
template <typename T>
struct PriorMap {
  Tensor<T> features;  // (1 or n, c_p, h_lr, w_lr)
  PriorSource source = PriorSource::file;
};

// VGG19 prefix through the conv4_2 stage (post-ReLU activations at 1/8 the
// input resolution). Parameters are frozen: they are never marked trainable
// and never receive gradients.
template <typename T>
class VggSlice {
 public:
  static const std::vector<ConvDef>& layout() {
    static const std::vector<ConvDef> defs = [] {
      std::vector<ConvDef> v;
      auto conv = [&v](const char* name, i64 cin, i64 cout) {
        v.push_back(ConvDef{std::string("vgg.") + name, cin, cout, 3});
      };
      conv("conv1_1", 3, 64);
      conv("conv1_2", 64, 64);
      conv("conv2_1", 64, 128);
      conv("conv2_2", 128, 128);
      conv("conv3_1", 128, 256);
      conv("conv3_2", 256, 256);
      conv("conv3_3", 256, 256);
      conv("conv3_4", 256, 256);
      conv("conv4_1", 256, 512);
      conv("conv4_2", 512, 512);
      return v;
    }();
    return defs;
  }

  // Max pools sit after conv1_2, conv2_2 and conv3_4.
  static bool pool_after(size_t layer_index) {
    return layer_index == 1 || layer_index == 3 || layer_index == 7;
  }

  static constexpr i64 feature_channels = 512;
  static constexpr i64 grid_factor = 8;

  // Weights drawn from a fixed seed; every property the engine tests is
  // weight-agnostic, real ImageNet weights load through the same bundle.
  static VggSlice random(std::uint64_t seed) {
    VggSlice v;
    Rng rng(seed);
    for (const auto& def : layout()) def.init(v.params_, rng, /*trainable=*/false);
    return v;
  }

  static VggSlice load(const std::string& dir) {
    VggSlice v;
    v.params_ = load_store<T>(dir);
    for (const auto& def : layout()) {
      if (!v.params_.has(def.name + ".weight"))
        throw ConfigError("weight bundle missing " + def.name + ".weight");
      const Shape got = v.params_.at(def.name + ".weight").value.shape();
      const Shape want(def.cout, def.cin, def.k, def.k);
      if (got != want)
        throw ConfigError("weight bundle tensor " + def.name + " dims " + got.str() +
                          " do not match " + want.str());
    }
    v.freeze();
    return v;
  }

  void save(const std::string& dir) const { save_store(params_, dir); }

  // Gradient recording stays disabled for every tensor here.
  void freeze() {
    for (auto& e : params_.entries()) e.trainable = false;
  }

  const ParameterStore<T>& params() const { return params_; }
  ParameterStore<T>& params() { return params_; }

  // (1,3,h,w) RGB in [0,1] -> (1,512,h/8,w/8). Inference only.
  Tensor<T> features(const Tensor<T>& rgb01) const {
    const Shape s = rgb01.shape();
    if (s.c != 3) throw ShapeError("extractor expects RGB input, got " + s.str());
    if (s.h < grid_factor || s.w < grid_factor)
      throw ShapeError("extractor needs at least 8x8 input, got " + s.str());
    Tensor<T> x = rgb01;
    normalize(x);
    Graph<T> g(/*recording=*/false);
    // store is logically const during inference; leaves copy values
    ParamCtx<T> ctx(g, const_cast<ParameterStore<T>&>(params_));
    Val<T> cur = make_leaf(g, std::move(x), false);
    const auto& defs = layout();
    for (size_t i = 0; i < defs.size(); ++i) {
      cur = ops::relu(defs[i].fwd(ctx, cur));
      if (pool_after(i)) cur = ops::max_pool(cur, 2, 2);
    }
    return cur.v();
  }

 private:
  // ImageNet channel statistics on [0,1] inputs.
  static void normalize(Tensor<T>& x) {
    static constexpr double mean[3] = {0.485, 0.456, 0.406};
    static constexpr double stdev[3] = {0.229, 0.224, 0.225};
    const Shape s = x.shape();
    for (i64 n = 0; n < s.n; ++n)
      for (i64 c = 0; c < 3; ++c)
        for (i64 y = 0; y < s.h; ++y)
          for (i64 xq = 0; xq < s.w; ++xq)
            x.at(n, c, y, xq) =
                static_cast<T>((static_cast<double>(x.at(n, c, y, xq)) - mean[c]) / stdev[c]);
  }

  ParameterStore<T> params_;
};

// Loads a prior from an SGT1 file; maps stored on a coarser lattice are
// bilinearly upsampled to the expected LR size.
template <typename T>
PriorMap<T> load_prior(const std::string& path, i64 expected_h, i64 expected_w, i64 expected_c) {
  Tensor<T> t = load_sgt<T>(path);
  const Shape s = t.shape();
  if (s.c != expected_c)
    throw ConfigError("prior file has " + std::to_string(s.c) + " channels, config expects " +
                      std::to_string(expected_c));
  PriorMap<T> p;
  p.source = PriorSource::file;
  p.features = (s.h == expected_h && s.w == expected_w)
                   ? std::move(t)
                   : resize_tensor(t, expected_h, expected_w, ResizeKernel::bilinear);
  return p;
}

// conv4_2-stage activations, bilinearly upsampled from the 1/8 lattice back
// to the LR image size.
template <typename T>
PriorMap<T> extract_prior(const ImageBuffer& lr, const VggSlice<T>& vgg) {
  ImageBuffer rgb = lr;
  if (rgb.channels == 1) {
    ImageBuffer expanded(rgb.width, rgb.height, 3);
    for (i64 y = 0; y < rgb.height; ++y)
      for (i64 x = 0; x < rgb.width; ++x)
        for (i64 c = 0; c < 3; ++c) expanded.at(y, x, c) = rgb.at(y, x, 0);
    rgb = std::move(expanded);
  }
  Tensor<T> input = image_to_tensor<T>(rgb, /*scale01=*/true);
  Tensor<T> feat = vgg.features(input);
  PriorMap<T> p;
  p.source = PriorSource::extractor;
  p.features = resize_tensor(feat, rgb.height, rgb.width, ResizeKernel::bilinear);
  return p;
}

}  // namespace sgglc
