#include "sgglc/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sgglc/params.hpp"

namespace sgglc {

using nlohmann::json;

void ModelConfig::validate() const {
  if (scale < 2 || scale > 4) throw ConfigError("scale must be 2, 3 or 4");
  if (channels <= 0) throw ConfigError("channels must be positive");
  if (local_branch && global_branch && channels % 2 != 0)
    throw ConfigError("channels must be even for the half-channel branch split");
  if (!local_branch && !global_branch)
    throw ConfigError("at least one GLDEB branch must be enabled");
  if (n_glcm <= 0) throw ConfigError("n_glcm must be positive");
  if (n_gldeb <= 0) throw ConfigError("n_gldeb must be positive");
  std::set<i64> seen;
  for (i64 i : prior_injections) {
    if (i < 1 || i > n_glcm)
      throw ConfigError("prior injection index " + std::to_string(i) + " outside [1, " +
                        std::to_string(n_glcm) + "]");
    if (!seen.insert(i).second)
      throw ConfigError("duplicate prior injection index " + std::to_string(i));
  }
  if (!prior_injections.empty()) {
    if (prior_channels <= 0) throw ConfigError("prior_channels must be positive");
    if (prior_embed_channels <= 0) throw ConfigError("prior_embed_channels must be positive");
    if (prior_embed_grid <= 0) throw ConfigError("prior_embed_grid must be positive");
  }
  if (fab_hidden <= 0) throw ConfigError("fab_hidden must be positive");
  if (esa_channels <= 0) throw ConfigError("esa_channels must be positive");
  if (cca_hidden <= 0) throw ConfigError("cca_hidden must be positive");
  if (osa_window <= 0) throw ConfigError("osa_window must be positive");
  if (local_pool <= 0) throw ConfigError("local_pool must be positive");
  if (local_kernels.empty()) throw ConfigError("local_kernels must not be empty");
  for (i64 k : local_kernels)
    if (k <= 0 || k % 2 == 0) throw ConfigError("local kernel sizes must be odd");
  if (sc_kept_fraction < 0.0 || sc_kept_fraction > 1.0)
    throw ConfigError("sc_kept_fraction must lie in [0, 1]");
  if (local_branch) {
    const i64 width = global_branch ? channels / 2 : channels;
    const i64 kept = static_cast<i64>(std::ceil(sc_kept_fraction * static_cast<double>(width)));
    if ((width - kept) % 8 != 0)
      throw ConfigError("ShiftConv: " + std::to_string(width - kept) +
                        " shifted channels do not divide into 8 groups (width " +
                        std::to_string(width) + ", kept " + std::to_string(kept) +
                        "); adjust sc_kept_fraction");
  }
  if (global_branch) {
    const i64 width = local_branch ? channels / 2 : channels;
    if (width % 2 != 0)
      throw ConfigError("global branch width " + std::to_string(width) +
                        " must be even for the attention split");
  }
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.channels = 8;
  cfg.n_glcm = 2;
  cfg.n_gldeb = 2;
  cfg.prior_injections = {2};
  cfg.prior_channels = 16;
  cfg.prior_embed_channels = 8;
  cfg.prior_embed_grid = 8;
  cfg.fab_hidden = 4;
  cfg.esa_channels = 4;
  cfg.cca_hidden = 4;
  cfg.osa_window = 8;
  // 4-channel branch halves cannot form 8 shift groups, so the tiny model
  // keeps all ShiftConv channels unshifted (the 1x1 path is still exercised).
  cfg.sc_kept_fraction = 1.0;
  return cfg;
}

void TrainConfig::validate(i64 scale) const {
  if (lr0 <= 0) throw ConfigError("lr0 must be positive");
  if (halve_every_epochs <= 0) throw ConfigError("halve_every_epochs must be positive");
  if (patch <= 0) throw ConfigError("patch must be positive");
  if (patch % scale != 0 && patch * scale % scale != 0)
    throw ConfigError("patch must be divisible by scale");
  if (batch <= 0) throw ConfigError("batch must be positive");
  if (steps < 0) throw ConfigError("steps must be non-negative");
  if (steps_per_epoch <= 0) throw ConfigError("steps_per_epoch must be positive");
}

namespace {

template <typename V>
void read_if(const json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

void read_dims(const json& j, const char* key, std::vector<i64>& out) {
  if (j.contains(key)) out = j.at(key).get<std::vector<i64>>();
}

}  // namespace

ModelConfig parse_model_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config JSON: ") + e.what());
  }
  ModelConfig cfg;
  read_if(j, "scale", cfg.scale);
  read_if(j, "channels", cfg.channels);
  read_if(j, "n_glcm", cfg.n_glcm);
  read_if(j, "n_gldeb", cfg.n_gldeb);
  read_dims(j, "prior_injections", cfg.prior_injections);
  read_if(j, "prior_channels", cfg.prior_channels);
  read_if(j, "prior_embed_channels", cfg.prior_embed_channels);
  read_if(j, "prior_embed_grid", cfg.prior_embed_grid);
  read_if(j, "fab_enabled", cfg.fab_enabled);
  read_if(j, "fab_hidden", cfg.fab_hidden);
  read_if(j, "local_branch", cfg.local_branch);
  read_if(j, "global_branch", cfg.global_branch);
  read_if(j, "osa_spatial", cfg.osa_spatial);
  read_if(j, "osa_channel", cfg.osa_channel);
  read_if(j, "osa_window", cfg.osa_window);
  read_dims(j, "local_kernels", cfg.local_kernels);
  read_if(j, "sc_kept_fraction", cfg.sc_kept_fraction);
  read_if(j, "local_pool", cfg.local_pool);
  read_if(j, "esa_channels", cfg.esa_channels);
  read_if(j, "cca_hidden", cfg.cca_hidden);
  read_if(j, "merge_conv", cfg.merge_conv);
  cfg.validate();
  return cfg;
}

std::string model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["scale"] = cfg.scale;
  j["channels"] = cfg.channels;
  j["n_glcm"] = cfg.n_glcm;
  j["n_gldeb"] = cfg.n_gldeb;
  j["prior_injections"] = cfg.prior_injections;
  j["prior_channels"] = cfg.prior_channels;
  j["prior_embed_channels"] = cfg.prior_embed_channels;
  j["prior_embed_grid"] = cfg.prior_embed_grid;
  j["fab_enabled"] = cfg.fab_enabled;
  j["fab_hidden"] = cfg.fab_hidden;
  j["local_branch"] = cfg.local_branch;
  j["global_branch"] = cfg.global_branch;
  j["osa_spatial"] = cfg.osa_spatial;
  j["osa_channel"] = cfg.osa_channel;
  j["osa_window"] = cfg.osa_window;
  j["local_kernels"] = cfg.local_kernels;
  j["sc_kept_fraction"] = cfg.sc_kept_fraction;
  j["local_pool"] = cfg.local_pool;
  j["esa_channels"] = cfg.esa_channels;
  j["cca_hidden"] = cfg.cca_hidden;
  j["merge_conv"] = cfg.merge_conv;
  return j.dump(2) + "\n";
}

ModelConfig load_model_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_model_config_json(ss.str());
}

void save_model_config(const ModelConfig& cfg, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open config for write: " + path);
  os << model_config_to_json(cfg);
}

// ---- manifest io ----

std::string sanitize_tensor_filename(const std::string& name) {
  std::string out = name;
  for (char& ch : out)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_')) ch = '_';
  return out;
}

void write_manifest(const std::string& dir, const std::vector<TensorMeta>& metas) {
  std::filesystem::create_directories(dir);
  json arr = json::array();
  for (const TensorMeta& m : metas) {
    json e;
    e["name"] = m.name;
    e["dims"] = m.dims;
    e["file"] = m.file;
    e["trainable"] = m.trainable;
    arr.push_back(e);
  }
  json root;
  root["format"] = "sgglc-tensors-v1";
  root["tensors"] = arr;
  std::ofstream os(dir + "/manifest.json");
  if (!os) throw IoError("cannot write manifest in " + dir);
  os << root.dump(2) << "\n";
}

std::vector<TensorMeta> read_manifest(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw IoError("missing manifest.json in " + dir);
  json root;
  try {
    is >> root;
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest JSON: ") + e.what());
  }
  if (!root.contains("tensors")) throw FormatError("manifest has no tensor list: " + dir);
  std::vector<TensorMeta> metas;
  for (const auto& e : root.at("tensors")) {
    TensorMeta m;
    m.name = e.at("name").get<std::string>();
    m.dims = e.at("dims").get<std::vector<i64>>();
    m.file = e.at("file").get<std::string>();
    if (e.contains("trainable")) m.trainable = e.at("trainable").get<bool>();
    metas.push_back(m);
  }
  return metas;
}

}  // namespace sgglc
