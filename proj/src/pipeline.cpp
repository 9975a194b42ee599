#include "metsyn/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "metsyn/denoiser.hpp"
#include "metsyn/diffusion.hpp"
#include "metsyn/metrics.hpp"
#include "metsyn/parallel.hpp"
#include "metsyn/stats.hpp"
#include "provenance_json.hpp"

namespace metsyn {

namespace fs = std::filesystem;
using nlohmann::json;

// Stream keys under the master seed; one per stage role.
namespace stream {
constexpr std::uint64_t phantom_shape = 10, phantom_texture = 11, phantom_lesions = 12;
constexpr std::uint64_t synthesis = 20;
constexpr std::uint64_t denoiser_pairs = 30, denoiser_init = 31, denoiser_train = 32;
constexpr std::uint64_t refine = 40;
constexpr std::uint64_t seg_init = 50, seg_train = 51, seg_finetune = 52, seg_subset = 53;
constexpr std::uint64_t operators = 60;
} // namespace stream

std::string sha256_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  EVP_MD_CTX *ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256 initialisation failed");
  }
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char *hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

namespace {

json read_json(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw InputError("missing input " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception &e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("write failed: " + path.string());
}

void write_json(const fs::path &path, const json &j) { write_text(path, j.dump(2) + "\n"); }

/// Rejects outputs that would land inside an input directory.
fs::path prepare_out(const fs::path &out, const std::vector<fs::path> &inputs) {
  if (out.empty()) throw ConfigError("an output directory is required");
  const auto o = fs::weakly_canonical(out);
  for (const auto &in : inputs) {
    if (in.empty()) continue;
    const auto i = fs::weakly_canonical(in);
    const auto rel = o.lexically_relative(i);
    if (o == i || (!rel.empty() && *rel.begin() != ".."))
      throw ConfigError("output directory " + out.string() + " lies inside input " + in.string());
  }
  fs::create_directories(out);
  return out;
}

void require_dir(const fs::path &dir, const std::string &what) {
  if (dir.empty()) throw ConfigError(what + " directory is required");
  if (!fs::is_directory(dir)) throw InputError("missing " + what + " directory " + dir.string());
}

/// Records inputs by manifest hash so the chain can be replayed.
void write_manifest(const fs::path &out, const std::string &stage, const RunConfig &cfg,
                    const std::vector<fs::path> &input_dirs, const std::vector<fs::path> &input_files,
                    const json &params) {
  json inputs = json::array();
  for (const auto &d : input_dirs) {
    if (d.empty()) continue;
    inputs.push_back({{"dir", d.generic_string()},
                      {"manifest_sha256", sha256_file(d / "manifest.json")}});
  }
  for (const auto &f : input_files) inputs.push_back({{"file", f.generic_string()}, {"sha256", sha256_file(f)}});

  std::vector<fs::path> files;
  for (const auto &e : fs::recursive_directory_iterator(out))
    if (e.is_regular_file() && e.path().filename() != "manifest.json")
      files.push_back(e.path().lexically_relative(out));
  std::sort(files.begin(), files.end());
  json outputs = json::array();
  for (const auto &f : files) outputs.push_back({{"path", f.generic_string()}, {"sha256", sha256_file(out / f)}});

  json m = {{"stage", stage},
            {"version", {{"metsyn", METSYN_VERSION}, {"compiler", __VERSION__}}},
            {"seed", cfg.seed},
            {"config", json::parse(cfg.to_json())},
            {"params", params},
            {"inputs", inputs},
            {"outputs", outputs}};
  write_json(out / "manifest.json", m);
}

json load_manifest(const fs::path &dir) { return read_json(dir / "manifest.json"); }

void expect_stage(const fs::path &dir, std::initializer_list<const char *> stages) {
  verify_stage_dir(dir);
  const auto stage = load_manifest(dir).at("stage").get<std::string>();
  for (const char *s : stages)
    if (stage == s) return;
  std::string want;
  for (const char *s : stages) want += (want.empty() ? "" : " or ") + std::string(s);
  throw InputError(dir.string() + " holds a '" + stage + "' stage, expected " + want);
}

// ---------------------------------------------------------------------------
// Case lists (phantom and preprocess outputs).

struct CaseEntry {
  std::string id;
  std::string kind; // healthy | lesioned | test
  json extra = json::object();
};

std::string image_file(const std::string &id) { return id + "_img.vvol"; }
std::string femur_file(const std::string &id) { return id + "_femur.vvol"; }
std::string lesion_file(const std::string &id) { return id + "_lesion.vvol"; }

std::vector<CaseEntry> read_cases(const fs::path &dir) {
  const json j = read_json(dir / "cases.json");
  std::vector<CaseEntry> out;
  try {
    for (const auto &c : j.at("cases"))
      out.push_back({c.at("id").get<std::string>(), c.at("kind").get<std::string>(),
                     c.value("extra", json::object())});
  } catch (const json::exception &e) {
    throw InputError((dir / "cases.json").string() + ": " + e.what());
  }
  return out;
}

void write_cases(const fs::path &dir, const std::vector<CaseEntry> &cases) {
  json arr = json::array();
  for (const auto &c : cases) arr.push_back({{"id", c.id}, {"kind", c.kind}, {"extra", c.extra}});
  write_json(dir / "cases.json", {{"cases", arr}});
}

bool has_lesion(const CaseEntry &c) { return c.kind != "healthy"; }

std::vector<CaseEntry> of_kind(const std::vector<CaseEntry> &cases, const std::string &kind) {
  std::vector<CaseEntry> out;
  for (const auto &c : cases)
    if (c.kind == kind) out.push_back(c);
  return out;
}

std::set<std::string> to_set(const std::vector<std::string> &v) { return {v.begin(), v.end()}; }

// ---------------------------------------------------------------------------
// Synthetic set listing.

struct SampleSet {
  std::vector<std::string> ids;
  bool refined = false;
  json meta;
};

SampleSet read_sample_set(const fs::path &dir) {
  SampleSet s;
  s.meta = read_json(dir / "dataset.json");
  try {
    s.ids = s.meta.at("samples").get<std::vector<std::string>>();
    s.refined = s.meta.at("refined").get<bool>();
  } catch (const json::exception &e) {
    throw InputError((dir / "dataset.json").string() + ": " + e.what());
  }
  return s;
}

// Sorted first k entries of a seeded Fisher-Yates permutation of 0..n-1, so
// growing k gives nested subsets.
std::vector<std::size_t> subset_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i-- > 1;) std::swap(perm[i], perm[rng.below(i + 1)]);
  perm.resize(std::min(n, k));
  std::sort(perm.begin(), perm.end());
  return perm;
}

DiffusionSchedule schedule_of(const RunConfig &cfg) {
  return DiffusionSchedule::linear(cfg.diffusion.T, cfg.diffusion.beta_1, cfg.diffusion.beta_T);
}

} // namespace

void verify_stage_dir(const fs::path &dir) {
  require_dir(dir, "stage");
  if (!fs::exists(dir / "manifest.json")) throw InputError("missing manifest in " + dir.string());
  const json m = load_manifest(dir);
  try {
    for (const auto &o : m.at("outputs")) {
      const fs::path p = dir / o.at("path").get<std::string>();
      if (!fs::exists(p)) throw InputError("missing input " + p.string());
      if (sha256_file(p) != o.at("sha256").get<std::string>())
        throw InputError("hash mismatch for " + p.string() + " (modified after its stage ran)");
    }
  } catch (const json::exception &e) {
    throw InputError((dir / "manifest.json").string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

void cmd_phantom(const RunConfig &cfg, const fs::path &out) {
  cfg.validate();
  prepare_out(out, {});
  const auto &ph = cfg.phantom;
  std::vector<CaseEntry> cases;
  const std::pair<const char *, int> groups[] = {
      {"healthy", ph.healthy}, {"lesioned", ph.lesioned}, {"test", ph.test}};
  for (const auto &[kind, count] : groups)
    for (int k = 0; k < count; ++k) {
      char id[32];
      std::snprintf(id, sizeof id, "%c%03d", kind[0] == 'h' ? 'h' : (kind[0] == 'l' ? 'p' : 't'), k);
      cases.push_back({id, kind});
    }

  std::vector<PhantomSpec> specs(cases.size());
  for (std::size_t k = 0; k < cases.size(); ++k) {
    PhantomSpec s = ph.spec;
    Rng rng(Rng::derive(cfg.seed, {stream::phantom_shape, k}));
    const auto wobble = [&] { return 1.0 + ph.jitter * (2.0 * rng.uniform() - 1.0); };
    s.shaft_radius_mm *= wobble();
    s.head_radius_mm = std::max(s.head_radius_mm * wobble(), s.shaft_radius_mm);
    s.bend_mm *= wobble();
    s.seed = Rng::derive(cfg.seed, {stream::phantom_texture, k});
    specs[k] = s;
  }

  parallel_for(cases.size(), [&](std::size_t k) {
    const auto &c = cases[k];
    if (c.kind == "healthy") {
      const auto f = make_healthy_femur(specs[k]);
      write_volume(f.image, out / image_file(c.id));
      write_mask(f.femur, out / femur_file(c.id));
    } else {
      Rng rng(Rng::derive(cfg.seed, {stream::phantom_lesions, k}));
      const auto f = make_lesioned_femur(specs[k], ph.lesions_per_volume, rng);
      write_volume(f.image, out / image_file(c.id));
      write_mask(f.femur, out / femur_file(c.id));
      write_mask(f.lesion, out / lesion_file(c.id));
    }
  });
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const auto &s = specs[k];
    cases[k].extra = {{"shaft_radius_mm", s.shaft_radius_mm},
                      {"head_radius_mm", s.head_radius_mm},
                      {"bend_mm", s.bend_mm},
                      {"texture_seed", s.seed}};
  }
  write_cases(out, cases);
  write_text(out / "phantom.json", cfg.to_json() + "\n");
  write_manifest(out, "phantom", cfg, {}, {}, json::object());
}

void cmd_preprocess(const RunConfig &cfg, const fs::path &in, const fs::path &out) {
  cfg.validate();
  expect_stage(in, {"phantom"});
  prepare_out(out, {in});
  auto cases = read_cases(in);
  const double t = cfg.preprocess.target_spacing;
  parallel_for(cases.size(), [&](std::size_t k) {
    auto &c = cases[k];
    const Volume img = resample_isotropic(read_volume(in / image_file(c.id)), t);
    const auto st = standardize_intensities(img);
    write_volume(st.volume, out / image_file(c.id));
    const Mask femur = resample_mask(read_mask(in / femur_file(c.id)), t);
    write_mask(femur, out / femur_file(c.id));
    if (has_lesion(c)) {
      const Mask lesion = resample_mask(read_mask(in / lesion_file(c.id)), t);
      if (count_foreground(lesion) == 0)
        throw InputError("lesion of " + c.id + " vanished during resampling");
      write_mask(lesion, out / lesion_file(c.id));
    }
    c.extra = {{"mean", st.mean}, {"std", st.std}};
  });
  write_cases(out, cases);
  write_manifest(out, "preprocess", cfg, {in}, {}, {{"target_spacing", t}});
}

void cmd_synthesize(const RunConfig &cfg, const fs::path &in, const fs::path &out,
                    const std::vector<std::string> &exclude) {
  cfg.validate();
  expect_stage(in, {"preprocess"});
  prepare_out(out, {in});
  const auto cases = read_cases(in);
  const auto excluded = to_set(exclude);
  std::vector<LabeledCase> donors, hosts;
  for (const auto &c : cases) {
    if (c.kind == "lesioned" && !excluded.count(c.id))
      donors.push_back({c.id, read_volume(in / image_file(c.id)), read_mask(in / lesion_file(c.id))});
    else if (c.kind == "healthy")
      hosts.push_back({c.id, read_volume(in / image_file(c.id)), read_mask(in / femur_file(c.id))});
  }
  if (donors.empty()) throw InputError("no donor lesions left in " + in.string());
  if (hosts.empty()) throw InputError("no healthy hosts in " + in.string());

  SynthesisConfig sc = cfg.synthesis;
  sc.seed = Rng::derive(cfg.seed, {stream::synthesis});
  const Dataset ds = generate_dataset(donors, hosts, cfg.per_pair, sc);

  fs::create_directories(out / "samples");
  std::vector<std::string> ids;
  for (const auto &s : ds.samples) {
    write_sample(s, out / "samples");
    ids.push_back(s.id);
  }
  std::vector<std::string> donor_ids, host_ids;
  for (const auto &d : donors) donor_ids.push_back(d.id);
  for (const auto &h : hosts) host_ids.push_back(h.id);
  write_json(out / "dataset.json", {{"samples", ids},
                                    {"refined", false},
                                    {"yield", detail::to_json(ds.yield)},
                                    {"donors", donor_ids},
                                    {"hosts", host_ids},
                                    {"excluded_donors", exclude},
                                    {"synthesis_seed", sc.seed}});
  write_manifest(out, "synthesize", cfg, {in}, {}, {{"exclude_donors", exclude}});
}

void cmd_train_denoiser(const RunConfig &cfg, const fs::path &in, const fs::path &out) {
  cfg.validate();
  expect_stage(in, {"preprocess"});
  prepare_out(out, {in});
  std::vector<Volume> images;
  for (const auto &c : read_cases(in))
    if (c.kind != "test") images.push_back(read_volume(in / image_file(c.id)));
  if (images.empty()) throw InputError("no training images in " + in.string());

  const auto s = schedule_of(cfg);
  DenoiserPairOptions opt;
  opt.count = cfg.denoiser.pairs;
  opt.patch = cfg.denoiser.patch;
  opt.t_max = cfg.denoiser.t_max;
  opt.seed = Rng::derive(cfg.seed, {stream::denoiser_pairs});
  const auto pairs = make_denoiser_pairs(images, s, opt);

  TinyNet net(cfg.denoiser.channels);
  net.init(Rng::derive(cfg.seed, {stream::denoiser_init}));
  TrainConfig tc = cfg.denoiser.train;
  tc.seed = Rng::derive(cfg.seed, {stream::denoiser_train});
  const auto res = train(net, pairs, tc);

  save_checkpoint(res.net, out / "model.ckpt", tc.seed, res.best_epoch);
  write_text(out / "history.csv", history_csv(res.history));
  write_json(out / "training.json", {{"kind", "denoiser"},
                                     {"T", s.T()},
                                     {"beta_1", s.beta(1)},
                                     {"beta_T", s.beta(s.T())},
                                     {"pairs", pairs.size()},
                                     {"initial_val_loss", res.initial_val_loss},
                                     {"best_val_loss", res.best_val_loss},
                                     {"best_epoch", res.best_epoch},
                                     {"epochs_run", res.history.size()},
                                     {"early_stopped", res.early_stopped}});
  write_manifest(out, "train_denoiser", cfg, {in}, {}, json::object());
}

void cmd_refine(const RunConfig &cfg, const fs::path &in, const fs::path &denoiser_dir, int lambda,
                const fs::path &out) {
  cfg.validate();
  expect_stage(in, {"synthesize"});
  expect_stage(denoiser_dir, {"train_denoiser"});
  prepare_out(out, {in, denoiser_dir});
  if (lambda == 0) lambda = cfg.diffusion.lambda;
  const auto s = schedule_of(cfg);
  if (lambda < 1 || lambda > s.T()) throw ConfigError("lambda must lie in [1, T]");
  const json info = read_json(denoiser_dir / "training.json");
  if (info.at("T").get<int>() != s.T() || info.at("beta_1").get<double>() != s.beta(1) ||
      info.at("beta_T").get<double>() != s.beta(s.T()))
    throw ConfigError("denoiser was trained with a different diffusion schedule");
  const NetDenoiser d(load_checkpoint(denoiser_dir / "model.ckpt"), s.T());

  SampleSet set = read_sample_set(in);
  if (set.refined) throw InputError(in.string() + " is already refined");
  fs::create_directories(out / "samples");
  parallel_for(set.ids.size(), [&](std::size_t i) {
    const auto sample = read_sample(in / "samples", set.ids[i]);
    const auto seed = Rng::derive(cfg.seed, {stream::refine, i});
    write_sample(refine(sample, lambda, d, s, cfg.diffusion.n_ddim, seed), out / "samples");
  });
  json meta = set.meta;
  meta["refined"] = true;
  meta["lambda"] = lambda;
  meta["n_ddim"] = cfg.diffusion.n_ddim;
  write_json(out / "dataset.json", meta);
  write_manifest(out, "refine", cfg, {in, denoiser_dir}, {}, {{"lambda", lambda}});
}

namespace {

std::vector<TrainingPair> case_pairs(const fs::path &dir, const std::vector<CaseEntry> &cases) {
  std::vector<TrainingPair> out;
  for (const auto &c : cases)
    out.push_back({tensor_from_volume(read_volume(dir / image_file(c.id))),
                   tensor_from_mask(read_mask(dir / lesion_file(c.id)))});
  return out;
}

} // namespace

void cmd_train_seg(const RunConfig &cfg, SegMode mode, const fs::path &real, const fs::path &pretrain,
                   int train_size, const std::vector<std::string> &exclude, const fs::path &out) {
  cfg.validate();
  if (train_size < 0) throw ConfigError("--train-size must be >= 0");
  const bool uses_real = mode == SegMode::real || mode == SegMode::synthetic_ft ||
                         mode == SegMode::diffusion_ft;
  const bool uses_pretrain = mode != SegMode::real;
  if (uses_real) expect_stage(real, {"preprocess"});
  if (uses_pretrain) {
    if (pretrain.empty()) throw ConfigError("mode " + seg_mode_name(mode) + " needs a synthetic set");
    expect_stage(pretrain, {"synthesize", "refine"});
  }
  prepare_out(out, {uses_real ? real : fs::path{}, uses_pretrain ? pretrain : fs::path{}});
  const auto excluded = to_set(exclude);

  std::vector<CaseEntry> real_cases;
  if (uses_real) {
    for (const auto &c : of_kind(read_cases(real), "lesioned"))
      if (!excluded.count(c.id)) real_cases.push_back(c);
    if (mode == SegMode::real && train_size > 0 && static_cast<std::size_t>(train_size) < real_cases.size()) {
      std::vector<CaseEntry> kept;
      for (auto i : subset_indices(real_cases.size(), static_cast<std::size_t>(train_size),
                                   Rng::derive(cfg.seed, {stream::seg_subset})))
        kept.push_back(real_cases[i]);
      real_cases = std::move(kept);
    }
    if (real_cases.empty()) throw InputError("no real training cases left in " + real.string());
  }

  std::set<std::string> lineage;
  for (const auto &c : real_cases) lineage.insert(c.id);
  std::vector<TrainingPair> pre_pairs;
  std::size_t pre_count = 0;
  if (uses_pretrain) {
    const SampleSet set = read_sample_set(pretrain);
    const bool want_refined = mode == SegMode::diffusion || mode == SegMode::diffusion_ft;
    if (set.refined != want_refined)
      throw InputError("mode " + seg_mode_name(mode) + " needs a " +
                       (want_refined ? "refined" : "non-refined") + " synthetic set");
    std::vector<SyntheticSample> eligible;
    for (const auto &id : set.ids) {
      auto s = read_sample(pretrain / "samples", id);
      if (!excluded.count(s.provenance.donor_id)) eligible.push_back(std::move(s));
    }
    const std::size_t keep = train_size > 0 ? static_cast<std::size_t>(train_size) : eligible.size();
    for (auto i : subset_indices(eligible.size(), keep, Rng::derive(cfg.seed, {stream::seg_subset}))) {
      lineage.insert(eligible[i].provenance.donor_id);
      pre_pairs.push_back({tensor_from_volume(eligible[i].image), tensor_from_mask(eligible[i].label)});
    }
    if (pre_pairs.empty()) throw InputError("no synthetic samples left in " + pretrain.string());
    pre_count = pre_pairs.size();
  }

  TinyNet net(cfg.segmentation.channels);
  net.init(Rng::derive(cfg.seed, {stream::seg_init}), cfg.segmentation.output_bias);
  json phases = json::array();
  auto run = [&](const std::vector<TrainingPair> &pairs, TrainConfig tc, std::uint64_t key,
                 const std::string &name) {
    tc.seed = Rng::derive(cfg.seed, {key});
    const auto res = train(net, pairs, tc);
    net = res.net;
    write_text(out / ("history_" + name + ".csv"), history_csv(res.history));
    phases.push_back({{"phase", name},
                      {"samples", pairs.size()},
                      {"lr", tc.optimizer.lr},
                      {"decay", tc.optimizer.decay},
                      {"patience", tc.patience},
                      {"initial_val_loss", res.initial_val_loss},
                      {"best_val_loss", res.best_val_loss},
                      {"best_epoch", res.best_epoch},
                      {"epochs_run", res.history.size()},
                      {"early_stopped", res.early_stopped}});
    return tc.seed;
  };
  std::uint64_t last_seed = 0;
  if (mode == SegMode::real) {
    last_seed = run(case_pairs(real, real_cases), cfg.segmentation.real, stream::seg_train, "real");
  } else {
    last_seed = run(pre_pairs, cfg.segmentation.synthetic, stream::seg_train, "pretrain");
    pre_pairs.clear();
    if (uses_real)
      last_seed = run(case_pairs(real, real_cases), cfg.segmentation.finetune, stream::seg_finetune,
                      "finetune");
  }
  save_checkpoint(net, out / "model.ckpt", last_seed, 0);
  std::vector<std::string> real_ids;
  for (const auto &c : real_cases) real_ids.push_back(c.id);
  write_json(out / "training.json", {{"kind", "segmenter"},
                                     {"mode", seg_mode_name(mode)},
                                     {"train_size", train_size},
                                     {"real_cases", real_ids},
                                     {"synthetic_samples", pre_count},
                                     {"lineage_donors", std::vector<std::string>(lineage.begin(), lineage.end())},
                                     {"excluded_donors", exclude},
                                     {"phases", phases}});
  write_manifest(out, "train_seg", cfg, {uses_real ? real : fs::path{}, uses_pretrain ? pretrain : fs::path{}},
                 {}, {{"mode", seg_mode_name(mode)}, {"train_size", train_size}, {"exclude_donors", exclude}});
}

void cmd_evaluate(const RunConfig &cfg, const fs::path &model_dir, const fs::path &in,
                  const std::vector<std::string> &exclude, const fs::path &out) {
  cfg.validate();
  expect_stage(model_dir, {"train_seg"});
  expect_stage(in, {"preprocess"});
  prepare_out(out, {model_dir, in});
  const json info = read_json(model_dir / "training.json");
  const auto lineage = info.at("lineage_donors").get<std::vector<std::string>>();
  for (const auto &id : exclude)
    if (std::find(lineage.begin(), lineage.end(), id) != lineage.end())
      throw InputError("cross-validation hygiene violated: excluded donor " + id +
                       " appears in the training lineage of " + model_dir.string());
  const TinyNet net = load_checkpoint(model_dir / "model.ckpt");
  const auto cases = of_kind(read_cases(in), "test");
  if (cases.empty()) throw InputError("no test cases in " + in.string());

  EvaluateOptions eo{cfg.metrics.postprocess, cfg.metrics.min_component_mm3};
  std::vector<MetricsReport> reports(cases.size());
  std::vector<std::string> ids;
  for (const auto &c : cases) ids.push_back(c.id);
  parallel_for(cases.size(), [&](std::size_t k) {
    const Volume img = read_volume(in / image_file(cases[k].id));
    const Mask ref = read_mask(in / lesion_file(cases[k].id));
    reports[k] = evaluate(segment(net, img), ref, eo);
  });
  write_text(out / "metrics.csv", metrics_csv(ids, reports));
  double md = 0.0;
  for (const auto &r : reports) md += r.dice;
  md /= static_cast<double>(reports.size());
  write_json(out / "summary.json", {{"mode", info.at("mode")}, {"cases", ids.size()}, {"mean_dice", md}});
  write_manifest(out, "evaluate", cfg, {model_dir, in}, {}, {{"exclude_donors", exclude}});
}

void cmd_variability(const RunConfig &cfg, const fs::path &in, const fs::path &model_dir,
                     const fs::path &out) {
  cfg.validate();
  expect_stage(in, {"phantom", "preprocess"});
  if (!model_dir.empty()) expect_stage(model_dir, {"train_seg"});
  prepare_out(out, {in, model_dir});
  auto cases = of_kind(read_cases(in), "test");
  if (cases.empty()) cases = of_kind(read_cases(in), "lesioned");
  if (cases.empty()) throw InputError("no lesion cases in " + in.string());
  if (cfg.operators.empty()) throw ConfigError("variability needs at least one operator");

  std::vector<Mask> refs;
  for (const auto &c : cases) refs.push_back(read_mask(in / lesion_file(c.id)));
  std::vector<Annotator> ops;
  for (std::size_t o = 0; o < cfg.operators.size(); ++o) {
    const auto &spec = cfg.operators[o];
    Annotator a{spec.name, spec.expert, {}, {}};
    for (std::size_t c = 0; c < refs.size(); ++c) {
      Rng r1(Rng::derive(cfg.seed, {stream::operators, o, c, 0}));
      a.masks.push_back(simulate_operator(refs[c], spec.skill, r1));
      if (spec.repeat) {
        Rng r2(Rng::derive(cfg.seed, {stream::operators, o, c, 1}));
        a.repeats.push_back(simulate_operator(refs[c], spec.skill, r2));
      }
    }
    ops.push_back(std::move(a));
  }
  std::vector<Mask> automatic;
  if (!model_dir.empty()) {
    const TinyNet net = load_checkpoint(model_dir / "model.ckpt");
    for (const auto &c : cases) {
      Mask m = segment(net, read_volume(in / image_file(c.id)));
      if (cfg.metrics.postprocess) m = postprocess(m, cfg.metrics.min_component_mm3);
      automatic.push_back(std::move(m));
    }
  }
  const auto rows = variability_table(ops, automatic);
  write_text(out / "variability.csv", variability_csv(rows));
  write_text(out / "variability.txt", variability_text(rows));
  write_manifest(out, "variability", cfg, {in, model_dir}, {}, json::object());
}

std::vector<double> read_metric_column(const fs::path &csv, const std::string &metric) {
  std::ifstream in(csv);
  if (!in) throw InputError("missing input " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError(csv.string() + ": empty file");
  auto split = [](const std::string &s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  const auto header = split(line);
  const auto it = std::find(header.begin(), header.end(), metric);
  if (it == header.end()) throw InputError(csv.string() + ": no column " + metric);
  const auto col = static_cast<std::size_t>(it - header.begin());
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw InputError(csv.string() + ": ragged row");
    try {
      out.push_back(std::stod(cells[col]));
    } catch (const std::exception &) {
      throw InputError(csv.string() + ": bad number '" + cells[col] + "'");
    }
  }
  if (out.empty()) throw InputError(csv.string() + ": no rows");
  return out;
}

void cmd_stats(const RunConfig &cfg, const std::vector<std::pair<std::string, fs::path>> &groups,
               const fs::path &out) {
  cfg.validate();
  if (groups.size() < 2) throw ConfigError("stats needs at least two groups");
  std::vector<fs::path> dirs, files;
  std::vector<Sample> samples;
  for (const auto &[name, path] : groups) {
    fs::path csv = path;
    if (fs::is_directory(path)) {
      expect_stage(path, {"evaluate"});
      dirs.push_back(path);
      csv = path / "metrics.csv";
    } else {
      files.push_back(path);
    }
    samples.push_back({name, read_metric_column(csv, cfg.stats.metric)});
  }
  prepare_out(out, dirs);
  if (cfg.stats.paired)
    for (const auto &s : samples)
      if (s.values.size() != samples.front().values.size())
        throw ConfigError("paired comparison needs groups of equal size");
  const auto c = compare_groups(cfg.stats.metric, samples, cfg.stats.paired);
  write_text(out / "stats.csv", comparison_csv(c));
  write_text(out / "stats.txt", comparison_text(c));
  json g = json::array();
  for (const auto &[name, path] : groups) g.push_back({{"name", name}, {"path", path.generic_string()}});
  write_manifest(out, "stats", cfg, dirs, files,
                 {{"groups", g}, {"test", cfg.stats.paired ? "wilcoxon" : "mann-whitney"}});
}

} // namespace metsyn
