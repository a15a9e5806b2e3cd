#pragma once

#include <string>
#include <vector>

#include "sgglc/common.hpp"

namespace sgglc {

// Architecture hyperparameters. Defaults describe the base x2 model
// (48 channels, 6 GLCMs, 3 GLDEBs, priors injected before the 3rd and 5th
// GLCM). Sub-block widths the reference leaves open are explicit fields so
// ablations and calibration are plain config edits.
struct ModelConfig {
  i64 scale = 2;           // in {2, 3, 4}
  i64 channels = 48;       // backbone width C
  i64 n_glcm = 6;
  i64 n_gldeb = 3;
  std::vector<i64> prior_injections = {3, 5};  // 1-based GLCM indices
  i64 prior_channels = 512;       // width of the incoming prior map
  i64 prior_embed_channels = 128; // prior compression width inside the SGM
  i64 prior_embed_grid = 8;       // prior is embedded on a 1/grid lattice
  bool fab_enabled = true;
  i64 fab_hidden = 12;
  bool local_branch = true;
  bool global_branch = true;
  bool osa_spatial = true;
  bool osa_channel = true;
  i64 osa_window = 8;
  std::vector<i64> local_kernels = {1, 3, 5};
  double sc_kept_fraction = 1.0 / 3.0;  // unshifted channel fraction in ShiftConv
  i64 local_pool = 2;                    // avg-pool window/stride in the local branch
  i64 esa_channels = 16;
  i64 cca_hidden = 24;
  bool merge_conv = true;  // closing 1x1 after the GLDEB branch concat

  void validate() const;
  bool injected_at(i64 glcm_index) const {
    for (i64 i : prior_injections)
      if (i == glcm_index) return true;
    return false;
  }
};

// Small configuration used by gradient checks and the overfit smoke test.
ModelConfig tiny_config();

// Optimization settings. The schedule halves the rate every
// `halve_every_epochs` epochs starting from lr0.
struct TrainConfig {
  double lr0 = 1e-3;
  i64 halve_every_epochs = 200;
  i64 patch = 64;     // LR patch edge; HR patch is scale x larger
  i64 batch = 16;
  i64 steps = 1000;
  i64 steps_per_epoch = 100;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate(i64 scale) const;
};

ModelConfig load_model_config(const std::string& path);
void save_model_config(const ModelConfig& cfg, const std::string& path);
ModelConfig parse_model_config_json(const std::string& json_text);
std::string model_config_to_json(const ModelConfig& cfg);

}  // namespace sgglc
