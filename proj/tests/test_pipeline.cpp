#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "metsyn/error.hpp"
#include "metsyn/pipeline.hpp"

using namespace metsyn;
namespace fs = std::filesystem;

TEST_CASE("defaults") {
  const RunConfig c;
  CHECK(c.diffusion.T == 200);
  CHECK(c.diffusion.beta_1 == 1e-4);
  CHECK(c.diffusion.beta_T == 2e-3);
  CHECK(c.segmentation.finetune.optimizer.lr == 0.001);
  CHECK(c.segmentation.finetune.optimizer.decay == 1.0);
  CHECK(c.segmentation.finetune.patience == 25);
  CHECK(c.segmentation.real.loss == LossKind::dice_loss);
  CHECK(c.segmentation.synthetic.optimizer.decay == 0.99);
  CHECK(c.segmentation.real.optimizer.decay == 0.999);
  CHECK(c.denoiser.train.loss == LossKind::mse_eps);
  CHECK(c.stats.paired);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config JSON round trip") {
  CHECK(RunConfig::parse("{}").to_json() == RunConfig{}.to_json());
  const std::string text = R"({
    "seed": 77,
    "phantom": {"healthy": 2, "dims": [16, 16, 24], "shaft_radius_mm": 3.2,
                "cortical_thickness_mm": 0.9, "head_radius_mm": 4.5, "bend_mm": 1.5},
    "synthesis": {"smooth_kernel": 1, "per_pair": 3},
    "diffusion": {"lambda": 20, "n_ddim": 5},
    "segmentation": {"output_bias": -2.5, "finetune": {"lr": 0.002, "epochs": 3}},
    "variability": {"operators": [{"name": "X", "skill": 0.5, "expert": true}]},
    "stats": {"paired": false}
  })";
  const RunConfig c = RunConfig::parse(text);
  CHECK(c.seed == 77);
  CHECK(c.phantom.healthy == 2);
  CHECK(c.phantom.spec.dims == Index3{16, 16, 24});
  CHECK(c.synthesis.smooth_kernel == 1);
  CHECK(c.per_pair == 3);
  CHECK(c.diffusion.lambda == 20);
  CHECK(c.segmentation.output_bias == -2.5);
  CHECK(c.segmentation.finetune.optimizer.lr == 0.002);
  CHECK(c.segmentation.finetune.epochs == 3);
  REQUIRE(c.operators.size() == 1);
  CHECK(c.operators[0].expert);
  CHECK(!c.stats.paired);
  CHECK(RunConfig::parse(c.to_json()).to_json() == c.to_json());
}

TEST_CASE("config errors name the key") {
  auto message = [](const std::string &text) {
    try {
      RunConfig::parse(text);
    } catch (const ConfigError &e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message(R"({"sede": 1})").find("sede") != std::string::npos);
  CHECK(message(R"({"diffusion": {"lamda": 3}})").find("lamda") != std::string::npos);
  CHECK(message(R"({"segmentation": {"real": {"lr": "fast"}}})").find("lr") != std::string::npos);
  CHECK(message(R"({"variability": {"operators": [{"skil": 1}]}})").find("skil") != std::string::npos);
  CHECK(message(R"({"diffusion": {"lambda": 500}})").find("lambda") != std::string::npos);
  CHECK(message(R"({"seed": -1})").find("seed") != std::string::npos);
  CHECK(message("{not json").find("JSON") != std::string::npos);
  CHECK(message(R"({"synthesis": {"smooth_kernel": 2}})") != "no error");
  CHECK(message(R"({"phantom": {"dims": [4, 4, 4]}})") != "no error");
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.json"), InputError);
}

TEST_CASE("segmentation mode names") {
  for (auto m : {SegMode::real, SegMode::synthetic, SegMode::synthetic_ft, SegMode::diffusion,
                 SegMode::diffusion_ft})
    CHECK(parse_seg_mode(seg_mode_name(m)) == m);
  CHECK(seg_mode_name(SegMode::synthetic_ft) == "synthetic+ft");
  CHECK_THROWS_AS(parse_seg_mode("both"), ConfigError);
}

TEST_CASE("sha256 and stage manifests") {
  const fs::path dir = fs::temp_directory_path() / "metsyn_unit" / "stage";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "abc.txt", std::ios::binary);
    f << "abc";
  }
  CHECK(sha256_file(dir / "abc.txt") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");

  RunConfig cfg = RunConfig::parse(R"({"phantom": {"healthy": 1, "lesioned": 1, "test": 0,
    "dims": [16, 16, 24], "shaft_radius_mm": 3.2, "cortical_thickness_mm": 0.9,
    "head_radius_mm": 4.5, "bend_mm": 1.5, "lesion_axis_mm": [1.7, 2.6]}})");
  const fs::path ph = dir / "phantom";
  cmd_phantom(cfg, ph);
  CHECK_NOTHROW(verify_stage_dir(ph));
  const fs::path img = ph / "p000_img.vvol";
  REQUIRE(fs::exists(img));
  {
    std::fstream f(img, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(-1, std::ios::end);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(verify_stage_dir(ph), InputError);
  CHECK_THROWS_AS(verify_stage_dir(dir), InputError);
}
