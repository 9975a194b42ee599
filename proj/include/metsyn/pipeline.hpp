#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "metsyn/phantom.hpp"
#include "metsyn/synthesis.hpp"
#include "metsyn/tinynet.hpp"

namespace metsyn {

struct OperatorSpec {
  std::string name;
  double skill = 0.7;
  bool expert = false;
  /// Annotate every case a second time.
  bool repeat = false;
};

/// Everything a pipeline run depends on besides its input files.
///
/// Parsed from JSON in which every section and key is optional and unknown
/// keys are rejected at every level. Stage seeds are derived from `seed`.
struct RunConfig {
  std::uint64_t seed = 0;

  struct Phantom {
    int healthy = 4;
    int lesioned = 4;
    int test = 4;
    int lesions_per_volume = 1;
    /// Relative per-case perturbation of radii and bend.
    double jitter = 0.1;
    PhantomSpec spec;
  } phantom;

  struct Preprocess {
    double target_spacing = 0.85;
  } preprocess;

  SynthesisConfig synthesis;
  int per_pair = 2;

  struct Diffusion {
    int T = 200;
    double beta_1 = 1e-4;
    double beta_T = 2e-3;
    int lambda = 10;
    int n_ddim = 0;
  } diffusion;

  struct Denoiser {
    std::vector<int> channels{2, 8, 8, 1};
    int pairs = 200;
    int patch = 16;
    int t_max = 0;
    TrainConfig train;
  } denoiser;

  struct Segmentation {
    std::vector<int> channels{1, 8, 8, 1};
    /// Starting logit of the output layer; lesions are a tiny fraction of
    /// the volume, so a zero start leaves the DICE gradient almost flat.
    double output_bias = -3.0;
    TrainConfig real;
    TrainConfig synthetic;
    TrainConfig finetune;
  } segmentation;

  struct Metrics {
    bool postprocess = false;
    double min_component_mm3 = 16.0;
  } metrics;

  std::vector<OperatorSpec> operators{
      {"A", 0.7, false, true}, {"B", 0.65, false, true}, {"C", 0.85, true, false}};

  struct Stats {
    bool paired = true;
    std::string metric = "dice";
  } stats;

  RunConfig();

  /// Throws ConfigError naming the offending key.
  static RunConfig parse(const std::string &json_text);
  static RunConfig load(const std::filesystem::path &path);
  /// Canonical JSON (sorted keys) of every field.
  std::string to_json() const;
  void validate() const;
};

enum class SegMode { real, synthetic, synthetic_ft, diffusion, diffusion_ft };

SegMode parse_seg_mode(const std::string &name);
std::string seg_mode_name(SegMode m);

std::string sha256_file(const std::filesystem::path &path);

/// Checks every output hash recorded in <dir>/manifest.json; InputError on
/// a missing manifest or any mismatch.
void verify_stage_dir(const std::filesystem::path &dir);

// Stages. Each writes into `out` (created if needed) and finishes with
// out/manifest.json listing input and output hashes and the config.

void cmd_phantom(const RunConfig &cfg, const std::filesystem::path &out);
void cmd_preprocess(const RunConfig &cfg, const std::filesystem::path &in,
                    const std::filesystem::path &out);
void cmd_synthesize(const RunConfig &cfg, const std::filesystem::path &in,
                    const std::filesystem::path &out, const std::vector<std::string> &exclude);
void cmd_train_denoiser(const RunConfig &cfg, const std::filesystem::path &in,
                        const std::filesystem::path &out);
/// lambda 0 takes the configured value.
void cmd_refine(const RunConfig &cfg, const std::filesystem::path &in,
                const std::filesystem::path &denoiser_dir, int lambda,
                const std::filesystem::path &out);
/// `real` holds the preprocessed cases; `pretrain` the synthetic or refined
/// set for the non-real modes. train_size 0 uses everything.
void cmd_train_seg(const RunConfig &cfg, SegMode mode, const std::filesystem::path &real,
                   const std::filesystem::path &pretrain, int train_size,
                   const std::vector<std::string> &exclude, const std::filesystem::path &out);
/// Fails when the model's training lineage names an excluded donor.
void cmd_evaluate(const RunConfig &cfg, const std::filesystem::path &model_dir,
                  const std::filesystem::path &in, const std::vector<std::string> &exclude,
                  const std::filesystem::path &out);
/// model_dir may be empty, in which case the automatic rows are omitted.
void cmd_variability(const RunConfig &cfg, const std::filesystem::path &in,
                     const std::filesystem::path &model_dir, const std::filesystem::path &out);
void cmd_stats(const RunConfig &cfg,
               const std::vector<std::pair<std::string, std::filesystem::path>> &groups,
               const std::filesystem::path &out);

/// Reads the metric column of a metrics CSV written by cmd_evaluate.
std::vector<double> read_metric_column(const std::filesystem::path &csv, const std::string &metric);

} // namespace metsyn
