#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "sgglc/sgglc.hpp"

using namespace sgglc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
};

fs::path work_dir() {
  static const fs::path d = [] {
    fs::path p = fs::temp_directory_path() / "sgglc_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

CliResult run_cli(const std::string& args) {
  const fs::path out_file = work_dir() / "cli_out.txt";
  const std::string cmd = std::string(SGGLC_CLI_BIN) + " " + args + " > " + out_file.string() +
                          " 2>&1";
  const int rc = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  std::ifstream is(out_file);
  std::stringstream ss;
  ss << is.rdbuf();
  r.out = ss.str();
  return r;
}

// micro config file + matching checkpoint, built once for the suite
struct Env {
  std::string config_path;
  std::string ckpt_dir;
  ModelConfig cfg;

  Env() {
    cfg = tiny_config();
    cfg.n_glcm = 1;
    cfg.n_gldeb = 1;
    cfg.prior_injections = {1};
    config_path = (work_dir() / "micro.json").string();
    save_model_config(cfg, config_path);
    ckpt_dir = (work_dir() / "ckpt").string();
    auto store = build_params<float>(make_model(cfg), 77);
    save_checkpoint(store, ckpt_dir);
    save_model_config(cfg, ckpt_dir + "/config.json");
  }
};

Env& env() {
  static Env e;
  return e;
}

std::string make_input_image(i64 w, i64 h, std::uint64_t seed, const std::string& name) {
  ImageBuffer img(w, h, 3);
  Rng rng(seed);
  for (auto& v : img.data) v = static_cast<unsigned char>(rng.below(256));
  const std::string path = (work_dir() / name).string();
  save_image(img, path);
  return path;
}

std::string make_prior_file(i64 w, i64 h, i64 c, std::uint64_t seed, const std::string& name) {
  Tensor<float> t(Shape(1, c, h, w));
  Rng rng(seed);
  fill_normal(t, 0.0, 1.0, rng);
  const std::string path = (work_dir() / name).string();
  save_sgt(path, t);
  return path;
}

}  // namespace

TEST_CASE("sr produces an upscaled image deterministically") {
  const std::string input = make_input_image(32, 32, 1, "in32.ppm");
  const std::string prior = make_prior_file(32, 32, env().cfg.prior_channels, 2, "prior32.sgt");
  const std::string out1 = (work_dir() / "sr1.ppm").string();
  const std::string out2 = (work_dir() / "sr2.ppm").string();

  CliResult r1 = run_cli("sr --checkpoint " + env().ckpt_dir + " --input " + input + " --prior " +
                         prior + " --output " + out1);
  CAPTURE(r1.out);
  REQUIRE(r1.exit_code == 0);
  ImageBuffer sr = load_image(out1);
  CHECK(sr.width == 64);
  CHECK(sr.height == 64);
  CHECK(r1.out.find("ms") != std::string::npos);  // timing is reported

  CliResult r2 = run_cli("sr --checkpoint " + env().ckpt_dir + " --input " + input + " --prior " +
                         prior + " --output " + out2);
  REQUIRE(r2.exit_code == 0);
  CHECK(load_image(out2) == sr);  // byte-identical reruns
}

TEST_CASE("sr without a prior source is a usage error") {
  const std::string input = make_input_image(16, 16, 3, "in16.ppm");
  CliResult r = run_cli("sr --checkpoint " + env().ckpt_dir + " --input " + input + " --output " +
                        (work_dir() / "never.ppm").string());
  CHECK(r.exit_code != 0);
  CHECK(r.out.find("prior") != std::string::npos);
}

TEST_CASE("sr with --extract runs the built-in extractor") {
  // extraction emits 512 channels; the micro config must expect them
  ModelConfig cfg = env().cfg;
  cfg.prior_channels = 512;
  cfg.prior_embed_channels = 4;
  const std::string cfg512 = (work_dir() / "micro512.json").string();
  save_model_config(cfg, cfg512);
  const std::string ck512 = (work_dir() / "ckpt512").string();
  save_checkpoint(build_params<float>(make_model(cfg), 9), ck512);
  const std::string input = make_input_image(16, 16, 4, "in16b.ppm");
  const std::string out = (work_dir() / "sr_extract.ppm").string();
  CliResult r = run_cli("sr --config " + cfg512 + " --checkpoint " + ck512 + " --input " + input +
                        " --extract --output " + out);
  CAPTURE(r.out);
  REQUIRE(r.exit_code == 0);
  CHECK(load_image(out).width == 32);
}

TEST_CASE("metrics reports the capped values for identical files") {
  const std::string img = make_input_image(24, 24, 5, "m.ppm");
  CliResult r = run_cli("--json metrics --ref " + img + " --test " + img + " --scale 2");
  REQUIRE(r.exit_code == 0);
  json j = json::parse(r.out);
  CHECK(j["psnr_db"].get<double>() == 99.0);
  CHECK(j["ssim"].get<double>() == doctest::Approx(1.0));
  CHECK(j["scale"].get<int>() == 2);
}

TEST_CASE("metrics rejects a size mismatch") {
  const std::string a = make_input_image(24, 24, 6, "ma.ppm");
  const std::string b = make_input_image(20, 24, 7, "mb.ppm");
  CliResult r = run_cli("metrics --ref " + a + " --test " + b + " --scale 2");
  CHECK(r.exit_code != 0);
}

TEST_CASE("stats prints the breakdown and target deviations") {
  CliResult r = run_cli("--json stats");
  REQUIRE(r.exit_code == 0);
  json j = json::parse(r.out);
  CHECK(j["params"].get<i64>() > 0);
  CHECK(j["multiply_adds"].get<i64>() > 0);
  CHECK(j["modules"].size() >= 8);
  CHECK(j.contains("deviation_params"));
  CHECK(j.contains("deviation_multiply_adds"));
  // published x2 comparison targets are reported
  CHECK(j["target_params_k"].get<double>() == 490.0);
  CHECK(j["target_multiply_adds_g"].get<double>() == 45.0);
}

TEST_CASE("stats rejects an empty model config") {
  ModelConfig cfg = tiny_config();
  const std::string path = (work_dir() / "empty.json").string();
  {
    std::ofstream os(path);
    os << "{\"n_glcm\": 0}";
  }
  CliResult r = run_cli("stats --config " + path);
  CHECK(r.exit_code != 0);
  (void)cfg;
}

TEST_CASE("gradcheck subcommand exits zero on a clean build") {
  // micro config keeps the CLI-level check fast
  ModelConfig cfg = env().cfg;
  const std::string path = (work_dir() / "gc.json").string();
  save_model_config(cfg, path);
  CliResult r = run_cli("--json gradcheck --config " + path);
  CAPTURE(r.out);
  REQUIRE(r.exit_code == 0);
  json j = json::parse(r.out);
  CHECK(j["pass"].get<bool>());
  CHECK(j["max_rel_err"].get<double>() <= 1e-4);
}

TEST_CASE("train --steps 0 writes an unmodified checkpoint copy") {
  const fs::path corpus = work_dir() / "corpus0";
  fs::create_directories(corpus);
  ImageBuffer img(16, 16, 3, 128);
  save_image(img, (corpus / "flat.ppm").string());
  const std::string out = (work_dir() / "ckpt_copy").string();
  CliResult r = run_cli("train --corpus " + corpus.string() + " --checkpoint " + env().ckpt_dir +
                        " --out " + out + " --steps 0");
  CAPTURE(r.out);
  REQUIRE(r.exit_code == 0);
  auto a = load_checkpoint<float>(env().ckpt_dir);
  auto b = load_checkpoint<float>(out);
  CHECK(a.same_bits(b));
}

TEST_CASE("train runs a couple of steps and logs them") {
  const fs::path corpus = work_dir() / "corpus1";
  fs::create_directories(corpus);
  Rng rng(8);
  for (int i = 0; i < 2; ++i) {
    ImageBuffer img(24, 24, 3);
    for (auto& v : img.data) v = static_cast<unsigned char>(rng.below(256));
    save_image(img, (corpus / ("im" + std::to_string(i) + ".ppm")).string());
  }
  // priors off keeps the corpus prior cache out of the micro run
  ModelConfig cfg = env().cfg;
  cfg.prior_injections = {};
  const std::string cfg_path = (work_dir() / "noprior.json").string();
  save_model_config(cfg, cfg_path);
  const std::string out = (work_dir() / "ckpt_trained").string();
  CliResult r = run_cli("train --corpus " + corpus.string() + " --config " + cfg_path + " --out " +
                        out + " --steps 3 --batch 2 --patch 8 --seed 5");
  CAPTURE(r.out);
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("step=1") != std::string::npos);
  CHECK(r.out.find("step=3") != std::string::npos);
  CHECK(r.out.find("lr=") != std::string::npos);
  CHECK(r.out.find("loss=") != std::string::npos);
  CHECK(fs::exists(fs::path(out) / "manifest.json"));
}

TEST_CASE("train with prior injections caches and crops extracted priors") {
  const fs::path corpus = work_dir() / "corpus2";
  fs::create_directories(corpus);
  Rng rng(11);
  ImageBuffer img(32, 32, 3);
  for (auto& v : img.data) v = static_cast<unsigned char>(rng.below(256));
  save_image(img, (corpus / "im.ppm").string());

  ModelConfig cfg = env().cfg;  // injects at GLCM 1
  cfg.prior_channels = 512;     // extractor width
  cfg.prior_embed_channels = 4;
  const std::string cfg_path = (work_dir() / "prior_train.json").string();
  save_model_config(cfg, cfg_path);
  const std::string out = (work_dir() / "ckpt_prior_trained").string();
  CliResult r = run_cli("train --corpus " + corpus.string() + " --config " + cfg_path +
                        " --out " + out + " --steps 2 --batch 1 --patch 8 --seed 3");
  CAPTURE(r.out);
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("step=2") != std::string::npos);
}

TEST_CASE("bench aggregates per-image reports into an arithmetic mean") {
  const fs::path dir = work_dir() / "benchset";
  fs::create_directories(dir);
  Rng rng(9);
  for (int i = 0; i < 3; ++i) {
    ImageBuffer img(24, 24, 3);
    for (auto& v : img.data) v = static_cast<unsigned char>(rng.below(256));
    save_image(img, (dir / ("b" + std::to_string(i) + ".ppm")).string());
  }
  // prior-free config so the bench needs no prior files
  ModelConfig cfg = env().cfg;
  cfg.prior_injections = {};
  const std::string cfg_path = (work_dir() / "bench_cfg.json").string();
  save_model_config(cfg, cfg_path);
  const std::string ck = (work_dir() / "bench_ckpt").string();
  save_checkpoint(build_params<float>(make_model(cfg), 10), ck);

  CliResult r = run_cli("--json bench --dir " + dir.string() + " --config " + cfg_path +
                        " --checkpoint " + ck);
  CAPTURE(r.out);
  REQUIRE(r.exit_code == 0);
  json j = json::parse(r.out);
  REQUIRE(j["images"].size() == 3);
  double psum = 0, ssum = 0;
  for (const auto& e : j["images"]) {
    psum += e["psnr_db"].get<double>();
    ssum += e["ssim"].get<double>();
  }
  CHECK(j["mean_psnr_db"].get<double>() == doctest::Approx(psum / 3).epsilon(1e-12));
  CHECK(j["mean_ssim"].get<double>() == doctest::Approx(ssum / 3).epsilon(1e-12));
}

TEST_CASE("sr reproduces the golden output bytes") {
  const std::string golden = std::string(SGGLC_FIXTURES) + "/sr_golden.ppm";
  REQUIRE_MESSAGE(fs::exists(golden), "run gen_fixtures to produce golden files");
  const std::string input = std::string(SGGLC_FIXTURES) + "/sr_input.ppm";
  const std::string prior = std::string(SGGLC_FIXTURES) + "/sr_prior.sgt";
  const std::string ckpt = std::string(SGGLC_FIXTURES) + "/sr_ckpt";
  const std::string out = (work_dir() / "sr_golden_run.ppm").string();
  CliResult r = run_cli("sr --checkpoint " + ckpt + " --input " + input + " --prior " + prior +
                        " --output " + out);
  CAPTURE(r.out);
  REQUIRE(r.exit_code == 0);
  CHECK(load_image(out) == load_image(golden));
}
