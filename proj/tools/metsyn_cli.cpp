// metsyn command-line driver. Talks to the library only through metsyn.h.

#include <cstdio>
#include <cstdint>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metsyn/metsyn.h"

namespace {

int exit_code(ms_status s) {
  switch (s) {
  case MS_OK: return 0;
  case MS_ERR_CONFIG:
  case MS_ERR_ARGUMENT: return 2;
  case MS_ERR_INPUT: return 3;
  case MS_ERR_NUMERIC: return 4;
  default: return 1;
  }
}

const char *opt(const std::string &s) { return s.empty() ? nullptr : s.c_str(); }

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Synthetic bone-metastasis pipeline at desk scale"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(ms_version()));

  std::string config, out;
  std::uint64_t seed = 0;
  int threads = 1;
  app.add_option("--config", config, "RunConfig JSON file")->check(CLI::ExistingFile);
  auto *seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
  app.add_option("--threads", threads, "worker thread cap; 1 is the reference schedule")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", out, "output directory");

  std::string in, model, mode = "real", real, synthetic, exclude;
  int lambda = 0, train_size = 0;
  std::vector<std::string> groups;

  auto *phantom = app.add_subcommand("phantom", "write procedural femur phantoms");
  auto *preprocess = app.add_subcommand("preprocess", "resample and standardize phantom cases");
  preprocess->add_option("--in", in, "phantom stage directory")->required();
  auto *synthesize = app.add_subcommand("synthesize", "transplant lesions into healthy hosts");
  synthesize->add_option("--in", in, "preprocess stage directory")->required();
  synthesize->add_option("--exclude-donors", exclude, "comma-separated donor ids to leave out");
  auto *train_denoiser = app.add_subcommand("train_denoiser", "train the noise predictor");
  train_denoiser->add_option("--in", in, "preprocess stage directory")->required();
  auto *refine = app.add_subcommand("refine", "partially noise and denoise synthetic samples");
  refine->add_option("--in", in, "synthesize stage directory")->required();
  refine->add_option("--model", model, "train_denoiser stage directory")->required();
  refine->add_option("--lambda", lambda, "noising timestep (default from config)")
      ->check(CLI::PositiveNumber);
  auto *train_seg = app.add_subcommand("train_seg", "train a toy segmenter");
  train_seg->add_option("--mode", mode, "real, synthetic, synthetic+ft, diffusion or diffusion+ft")
      ->check(CLI::IsMember({"real", "synthetic", "synthetic+ft", "diffusion", "diffusion+ft"}));
  train_seg->add_option("--real", real, "preprocess stage directory with real cases");
  train_seg->add_option("--synthetic", synthetic, "synthesize or refine stage directory");
  train_seg->add_option("--train-size", train_size, "cap on training samples (0 = all)")
      ->check(CLI::NonNegativeNumber);
  train_seg->add_option("--exclude-donors", exclude, "comma-separated donor ids to leave out");
  auto *evaluate = app.add_subcommand("evaluate", "segment test cases and score them");
  evaluate->add_option("--model", model, "train_seg stage directory")->required();
  evaluate->add_option("--in", in, "preprocess stage directory with test cases")->required();
  evaluate->add_option("--exclude-donors", exclude,
                       "donor ids that must not appear in the model's training lineage");
  auto *variability = app.add_subcommand("variability", "operator variability table");
  variability->add_option("--in", in, "phantom or preprocess stage directory")->required();
  variability->add_option("--model", model, "train_seg stage directory for the automatic rows");
  auto *stats = app.add_subcommand("stats", "Kruskal-Wallis plus pairwise tests across groups");
  stats->add_option("--group", groups, "name=path of an evaluate directory or metrics CSV")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  ms_context *ctx = nullptr;
  ms_status st = ms_context_create(opt(config), &ctx);
  if (st == MS_OK && *seed_opt) st = ms_context_set_seed(ctx, seed);
  if (st == MS_OK) st = ms_context_set_threads(ctx, threads);

  const char *o = opt(out);
  std::string command = app.get_subcommands().front()->get_name();
  if (st == MS_OK) {
    if (phantom->parsed()) {
      st = ms_cmd_phantom(ctx, o);
    } else if (preprocess->parsed()) {
      st = ms_cmd_preprocess(ctx, in.c_str(), o);
    } else if (synthesize->parsed()) {
      st = ms_cmd_synthesize(ctx, in.c_str(), opt(exclude), o);
    } else if (train_denoiser->parsed()) {
      st = ms_cmd_train_denoiser(ctx, in.c_str(), o);
    } else if (refine->parsed()) {
      st = ms_cmd_refine(ctx, in.c_str(), model.c_str(), lambda, o);
    } else if (train_seg->parsed()) {
      st = ms_cmd_train_seg(ctx, mode.c_str(), opt(real), opt(synthetic), train_size, opt(exclude), o);
    } else if (evaluate->parsed()) {
      st = ms_cmd_evaluate(ctx, model.c_str(), in.c_str(), opt(exclude), o);
    } else if (variability->parsed()) {
      st = ms_cmd_variability(ctx, in.c_str(), opt(model), o);
    } else if (stats->parsed()) {
      std::vector<std::string> names, paths;
      for (const auto &g : groups) {
        const auto eq = g.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == g.size()) {
          std::fprintf(stderr, "metsyn stats: --group expects name=path, got '%s'\n", g.c_str());
          ms_context_free(ctx);
          return 2;
        }
        names.push_back(g.substr(0, eq));
        paths.push_back(g.substr(eq + 1));
      }
      std::vector<const char *> np, pp;
      for (std::size_t i = 0; i < names.size(); ++i) {
        np.push_back(names[i].c_str());
        pp.push_back(paths[i].c_str());
      }
      st = ms_cmd_stats(ctx, np.data(), pp.data(), np.size(), o);
    }
  }
  ms_context_free(ctx);
  if (st != MS_OK) {
    std::fprintf(stderr, "metsyn %s: %s: %s\n", command.c_str(), ms_status_name(st), ms_last_error());
    return exit_code(st);
  }
  return 0;
}
