#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "metsyn/pipeline.hpp"

namespace metsyn {

using nlohmann::json;

namespace {

/// One JSON object being read; every key must be claimed before finish().
class Section {
public:
  Section(const json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  template <typename F> void opt(const std::string &key, F &&read) {
    claimed_.insert(key);
    if (j_.contains(key)) read(j_.at(key), path_ + "." + key);
  }

  void finish() const {
    for (const auto &item : j_.items())
      if (!claimed_.count(item.key())) throw ConfigError("unknown key " + path_ + "." + item.key());
  }

private:
  const json &j_;
  std::string path_;
  std::set<std::string> claimed_;
};

double num(const json &v, const std::string &path) {
  if (!v.is_number()) throw ConfigError(path + " must be a number");
  return v.get<double>();
}

std::int64_t integer(const json &v, const std::string &path) {
  if (!v.is_number_integer()) throw ConfigError(path + " must be an integer");
  return v.get<std::int64_t>();
}

int small_int(const json &v, const std::string &path) {
  const auto x = integer(v, path);
  if (x < -1'000'000'000 || x > 1'000'000'000) throw ConfigError(path + " out of range");
  return static_cast<int>(x);
}

std::uint64_t u64(const json &v, const std::string &path) {
  if (!v.is_number_unsigned()) throw ConfigError(path + " must be a non-negative integer");
  return v.get<std::uint64_t>();
}

bool boolean(const json &v, const std::string &path) {
  if (!v.is_boolean()) throw ConfigError(path + " must be true or false");
  return v.get<bool>();
}

std::string text(const json &v, const std::string &path) {
  if (!v.is_string()) throw ConfigError(path + " must be a string");
  return v.get<std::string>();
}

template <std::size_t N> std::array<double, N> nums(const json &v, const std::string &path) {
  if (!v.is_array() || v.size() != N)
    throw ConfigError(path + " must be an array of " + std::to_string(N) + " numbers");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = num(v[i], path + "[" + std::to_string(i) + "]");
  return out;
}

std::vector<int> int_list(const json &v, const std::string &path) {
  if (!v.is_array()) throw ConfigError(path + " must be an array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(small_int(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

void read_train(const json &j, const std::string &path, TrainConfig &t) {
  Section s(j, path);
  s.opt("optimizer", [&](const json &v, const std::string &p) {
    const auto name = text(v, p);
    if (name == "adam") t.optimizer.kind = OptimizerKind::adam;
    else if (name == "sgd_momentum") t.optimizer.kind = OptimizerKind::sgd_momentum;
    else throw ConfigError(p + " must be \"adam\" or \"sgd_momentum\"");
  });
  s.opt("lr", [&](const json &v, const std::string &p) { t.optimizer.lr = num(v, p); });
  s.opt("momentum", [&](const json &v, const std::string &p) { t.optimizer.momentum = num(v, p); });
  s.opt("decay", [&](const json &v, const std::string &p) { t.optimizer.decay = num(v, p); });
  s.opt("loss", [&](const json &v, const std::string &p) {
    const auto name = text(v, p);
    if (name == "mse_eps") t.loss = LossKind::mse_eps;
    else if (name == "dice_loss") t.loss = LossKind::dice_loss;
    else throw ConfigError(p + " must be \"mse_eps\" or \"dice_loss\"");
  });
  s.opt("epochs", [&](const json &v, const std::string &p) { t.epochs = small_int(v, p); });
  s.opt("patience", [&](const json &v, const std::string &p) { t.patience = small_int(v, p); });
  s.opt("batch", [&](const json &v, const std::string &p) { t.batch = small_int(v, p); });
  s.finish();
}

json train_json(const TrainConfig &t) {
  return {{"optimizer", t.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd_momentum"},
          {"lr", t.optimizer.lr},
          {"momentum", t.optimizer.momentum},
          {"decay", t.optimizer.decay},
          {"loss", t.loss == LossKind::mse_eps ? "mse_eps" : "dice_loss"},
          {"epochs", t.epochs},
          {"patience", t.patience},
          {"batch", t.batch}};
}

void wrap_validate(const std::string &section, const auto &validate) {
  try {
    validate();
  } catch (const InvalidArgument &e) {
    throw ConfigError(section + ": " + e.what());
  }
}

} // namespace

RunConfig::RunConfig() {
  denoiser.train.optimizer = {OptimizerKind::adam, 5e-3, 0.9, 0.999};
  denoiser.train.loss = LossKind::mse_eps;
  denoiser.train.epochs = 20;
  denoiser.train.patience = 5;
  denoiser.train.batch = 8;

  // Full-scale schedules with Adam in place of SGD: at a few hundred steps SGD on
  // the whole-volume DICE loss barely moves.
  segmentation.real = TrainConfig::full_scale_segmenter(false);
  segmentation.real.optimizer = {OptimizerKind::adam, 1e-2, 0.9, 0.999};
  segmentation.real.epochs = 40;
  segmentation.real.batch = 2;
  segmentation.synthetic = TrainConfig::full_scale_segmenter(true);
  segmentation.synthetic.optimizer = {OptimizerKind::adam, 1e-2, 0.9, 0.99};
  segmentation.synthetic.epochs = 40;
  segmentation.synthetic.batch = 2;
  segmentation.finetune = TrainConfig::full_scale_finetune();
  segmentation.finetune.optimizer.kind = OptimizerKind::adam;
  segmentation.finetune.epochs = 20;
  segmentation.finetune.batch = 2;
}

RunConfig RunConfig::parse(const std::string &json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception &e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section s(root, "config");
  s.opt("seed", [&](const json &v, const std::string &p) { c.seed = u64(v, p); });

  s.opt("phantom", [&](const json &v, const std::string &p) {
    Section t(v, p);
    auto &ph = c.phantom;
    auto &sp = ph.spec;
    t.opt("healthy", [&](const json &x, const std::string &q) { ph.healthy = small_int(x, q); });
    t.opt("lesioned", [&](const json &x, const std::string &q) { ph.lesioned = small_int(x, q); });
    t.opt("test", [&](const json &x, const std::string &q) { ph.test = small_int(x, q); });
    t.opt("lesions_per_volume",
          [&](const json &x, const std::string &q) { ph.lesions_per_volume = small_int(x, q); });
    t.opt("jitter", [&](const json &x, const std::string &q) { ph.jitter = num(x, q); });
    t.opt("dims", [&](const json &x, const std::string &q) {
      const auto d = int_list(x, q);
      if (d.size() != 3) throw ConfigError(q + " must have three entries");
      sp.dims = {d[0], d[1], d[2]};
    });
    t.opt("spacing", [&](const json &x, const std::string &q) { sp.spacing = nums<3>(x, q); });
    t.opt("shaft_radius_mm",
          [&](const json &x, const std::string &q) { sp.shaft_radius_mm = num(x, q); });
    t.opt("cortical_thickness_mm",
          [&](const json &x, const std::string &q) { sp.cortical_thickness_mm = num(x, q); });
    t.opt("head_radius_mm", [&](const json &x, const std::string &q) { sp.head_radius_mm = num(x, q); });
    t.opt("bend_mm", [&](const json &x, const std::string &q) { sp.bend_mm = num(x, q); });
    t.opt("levels", [&](const json &x, const std::string &q) { sp.levels = nums<3>(x, q); });
    t.opt("lesion_level", [&](const json &x, const std::string &q) { sp.lesion_level = num(x, q); });
    t.opt("lesion_axis_mm",
          [&](const json &x, const std::string &q) { sp.lesion_axis_mm = nums<2>(x, q); });
    t.opt("noise_sigma", [&](const json &x, const std::string &q) { sp.noise_sigma = num(x, q); });
    t.finish();
  });

  s.opt("preprocess", [&](const json &v, const std::string &p) {
    Section t(v, p);
    t.opt("target_spacing",
          [&](const json &x, const std::string &q) { c.preprocess.target_spacing = num(x, q); });
    t.finish();
  });

  s.opt("synthesis", [&](const json &v, const std::string &p) {
    Section t(v, p);
    auto &sy = c.synthesis;
    t.opt("ellipsoid_axis_fraction_range", [&](const json &x, const std::string &q) {
      sy.ellipsoid_axis_fraction_range = nums<2>(x, q);
    });
    t.opt("rotation_range_deg",
          [&](const json &x, const std::string &q) { sy.rotation_range_deg = num(x, q); });
    t.opt("scale_range", [&](const json &x, const std::string &q) { sy.scale_range = nums<2>(x, q); });
    t.opt("smooth_kernel", [&](const json &x, const std::string &q) { sy.smooth_kernel = small_int(x, q); });
    t.opt("noise_sigma", [&](const json &x, const std::string &q) { sy.noise_sigma = num(x, q); });
    t.opt("max_placement_attempts",
          [&](const json &x, const std::string &q) { sy.max_placement_attempts = small_int(x, q); });
    t.opt("min_lesion_mm3", [&](const json &x, const std::string &q) { sy.min_lesion_mm3 = num(x, q); });
    t.opt("per_pair", [&](const json &x, const std::string &q) { c.per_pair = small_int(x, q); });
    t.finish();
  });

  s.opt("diffusion", [&](const json &v, const std::string &p) {
    Section t(v, p);
    auto &d = c.diffusion;
    t.opt("T", [&](const json &x, const std::string &q) { d.T = small_int(x, q); });
    t.opt("beta_1", [&](const json &x, const std::string &q) { d.beta_1 = num(x, q); });
    t.opt("beta_T", [&](const json &x, const std::string &q) { d.beta_T = num(x, q); });
    t.opt("lambda", [&](const json &x, const std::string &q) { d.lambda = small_int(x, q); });
    t.opt("n_ddim", [&](const json &x, const std::string &q) { d.n_ddim = small_int(x, q); });
    t.finish();
  });

  s.opt("denoiser", [&](const json &v, const std::string &p) {
    Section t(v, p);
    auto &d = c.denoiser;
    t.opt("channels", [&](const json &x, const std::string &q) { d.channels = int_list(x, q); });
    t.opt("pairs", [&](const json &x, const std::string &q) { d.pairs = small_int(x, q); });
    t.opt("patch", [&](const json &x, const std::string &q) { d.patch = small_int(x, q); });
    t.opt("t_max", [&](const json &x, const std::string &q) { d.t_max = small_int(x, q); });
    t.opt("train", [&](const json &x, const std::string &q) { read_train(x, q, d.train); });
    t.finish();
  });

  s.opt("segmentation", [&](const json &v, const std::string &p) {
    Section t(v, p);
    auto &g = c.segmentation;
    t.opt("channels", [&](const json &x, const std::string &q) { g.channels = int_list(x, q); });
    t.opt("output_bias", [&](const json &x, const std::string &q) { g.output_bias = num(x, q); });
    t.opt("real", [&](const json &x, const std::string &q) { read_train(x, q, g.real); });
    t.opt("synthetic", [&](const json &x, const std::string &q) { read_train(x, q, g.synthetic); });
    t.opt("finetune", [&](const json &x, const std::string &q) { read_train(x, q, g.finetune); });
    t.finish();
  });

  s.opt("metrics", [&](const json &v, const std::string &p) {
    Section t(v, p);
    t.opt("postprocess", [&](const json &x, const std::string &q) { c.metrics.postprocess = boolean(x, q); });
    t.opt("min_component_mm3",
          [&](const json &x, const std::string &q) { c.metrics.min_component_mm3 = num(x, q); });
    t.finish();
  });

  s.opt("variability", [&](const json &v, const std::string &p) {
    Section t(v, p);
    t.opt("operators", [&](const json &x, const std::string &q) {
      if (!x.is_array()) throw ConfigError(q + " must be an array");
      c.operators.clear();
      for (std::size_t i = 0; i < x.size(); ++i) {
        const std::string qi = q + "[" + std::to_string(i) + "]";
        Section o(x[i], qi);
        OperatorSpec op;
        op.name = "op" + std::to_string(i);
        o.opt("name", [&](const json &y, const std::string &r) { op.name = text(y, r); });
        o.opt("skill", [&](const json &y, const std::string &r) { op.skill = num(y, r); });
        o.opt("expert", [&](const json &y, const std::string &r) { op.expert = boolean(y, r); });
        o.opt("repeat", [&](const json &y, const std::string &r) { op.repeat = boolean(y, r); });
        o.finish();
        c.operators.push_back(op);
      }
    });
    t.finish();
  });

  s.opt("stats", [&](const json &v, const std::string &p) {
    Section t(v, p);
    t.opt("paired", [&](const json &x, const std::string &q) { c.stats.paired = boolean(x, q); });
    t.opt("metric", [&](const json &x, const std::string &q) { c.stats.metric = text(x, q); });
    t.finish();
  });

  s.finish();
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  const std::string textual{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse(textual);
}

void RunConfig::validate() const {
  const auto &ph = phantom;
  if (ph.healthy < 0 || ph.lesioned < 0 || ph.test < 0)
    throw ConfigError("phantom case counts must be >= 0");
  if (ph.lesions_per_volume < 1) throw ConfigError("phantom.lesions_per_volume must be >= 1");
  if (!(ph.jitter >= 0.0 && ph.jitter < 0.5)) throw ConfigError("phantom.jitter must lie in [0, 0.5)");
  wrap_validate("phantom", [&] { ph.spec.validate(); });
  if (!(preprocess.target_spacing > 0.0)) throw ConfigError("preprocess.target_spacing must be > 0");
  wrap_validate("synthesis", [&] { synthesis.validate(); });
  if (per_pair < 0) throw ConfigError("synthesis.per_pair must be >= 0");
  const auto &d = diffusion;
  if (d.T < 2) throw ConfigError("diffusion.T must be >= 2");
  if (!(d.beta_1 > 0.0 && d.beta_1 < d.beta_T && d.beta_T < 1.0))
    throw ConfigError("diffusion needs 0 < beta_1 < beta_T < 1");
  if (d.lambda < 1 || d.lambda > d.T) throw ConfigError("diffusion.lambda must lie in [1, T]");
  if (d.n_ddim < 0) throw ConfigError("diffusion.n_ddim must be >= 0");
  if (denoiser.channels.size() < 2 || denoiser.channels.front() != 2 || denoiser.channels.back() != 1)
    throw ConfigError("denoiser.channels must start with 2 and end with 1");
  if (denoiser.pairs < 1 || denoiser.patch < 1) throw ConfigError("denoiser.pairs and patch must be >= 1");
  if (denoiser.t_max < 0 || denoiser.t_max > d.T) throw ConfigError("denoiser.t_max must lie in [0, T]");
  wrap_validate("denoiser.train", [&] { denoiser.train.validate(); });
  const auto &g = segmentation;
  if (g.channels.size() < 2 || g.channels.front() != 1 || g.channels.back() != 1)
    throw ConfigError("segmentation.channels must start and end with 1");
  for (const auto &ch : {denoiser.channels, g.channels})
    for (int v : ch)
      if (v < 1) throw ConfigError("channel counts must be >= 1");
  if (!std::isfinite(g.output_bias)) throw ConfigError("segmentation.output_bias must be finite");
  wrap_validate("segmentation.real", [&] { g.real.validate(); });
  wrap_validate("segmentation.synthetic", [&] { g.synthetic.validate(); });
  wrap_validate("segmentation.finetune", [&] { g.finetune.validate(); });
  if (!(metrics.min_component_mm3 >= 0.0)) throw ConfigError("metrics.min_component_mm3 must be >= 0");
  std::set<std::string> names;
  for (const auto &op : operators) {
    if (!(op.skill > 0.0 && op.skill <= 1.0)) throw ConfigError("operator skill must lie in (0, 1]");
    if (!names.insert(op.name).second) throw ConfigError("duplicate operator name " + op.name);
  }
  static const std::set<std::string> metric_names{"dice", "hd_mm", "hd95_mm", "assd_mm"};
  if (!metric_names.count(stats.metric))
    throw ConfigError("stats.metric must be one of dice, hd_mm, hd95_mm, assd_mm");
}

std::string RunConfig::to_json() const {
  const auto &sp = phantom.spec;
  json ops = json::array();
  for (const auto &op : operators)
    ops.push_back({{"name", op.name}, {"skill", op.skill}, {"expert", op.expert}, {"repeat", op.repeat}});
  json j = {
      {"seed", seed},
      {"phantom",
       {{"healthy", phantom.healthy},
        {"lesioned", phantom.lesioned},
        {"test", phantom.test},
        {"lesions_per_volume", phantom.lesions_per_volume},
        {"jitter", phantom.jitter},
        {"dims", sp.dims},
        {"spacing", sp.spacing},
        {"shaft_radius_mm", sp.shaft_radius_mm},
        {"cortical_thickness_mm", sp.cortical_thickness_mm},
        {"head_radius_mm", sp.head_radius_mm},
        {"bend_mm", sp.bend_mm},
        {"levels", sp.levels},
        {"lesion_level", sp.lesion_level},
        {"lesion_axis_mm", sp.lesion_axis_mm},
        {"noise_sigma", sp.noise_sigma}}},
      {"preprocess", {{"target_spacing", preprocess.target_spacing}}},
      {"synthesis",
       {{"ellipsoid_axis_fraction_range", synthesis.ellipsoid_axis_fraction_range},
        {"rotation_range_deg", synthesis.rotation_range_deg},
        {"scale_range", synthesis.scale_range},
        {"smooth_kernel", synthesis.smooth_kernel},
        {"noise_sigma", synthesis.noise_sigma},
        {"max_placement_attempts", synthesis.max_placement_attempts},
        {"min_lesion_mm3", synthesis.min_lesion_mm3},
        {"per_pair", per_pair}}},
      {"diffusion",
       {{"T", diffusion.T},
        {"beta_1", diffusion.beta_1},
        {"beta_T", diffusion.beta_T},
        {"lambda", diffusion.lambda},
        {"n_ddim", diffusion.n_ddim}}},
      {"denoiser",
       {{"channels", denoiser.channels},
        {"pairs", denoiser.pairs},
        {"patch", denoiser.patch},
        {"t_max", denoiser.t_max},
        {"train", train_json(denoiser.train)}}},
      {"segmentation",
       {{"channels", segmentation.channels},
        {"output_bias", segmentation.output_bias},
        {"real", train_json(segmentation.real)},
        {"synthetic", train_json(segmentation.synthetic)},
        {"finetune", train_json(segmentation.finetune)}}},
      {"metrics",
       {{"postprocess", metrics.postprocess}, {"min_component_mm3", metrics.min_component_mm3}}},
      {"variability", {{"operators", ops}}},
      {"stats", {{"paired", stats.paired}, {"metric", stats.metric}}}};
  return j.dump(2);
}

SegMode parse_seg_mode(const std::string &name) {
  if (name == "real") return SegMode::real;
  if (name == "synthetic") return SegMode::synthetic;
  if (name == "synthetic+ft") return SegMode::synthetic_ft;
  if (name == "diffusion") return SegMode::diffusion;
  if (name == "diffusion+ft") return SegMode::diffusion_ft;
  throw ConfigError("unknown mode '" + name +
                    "' (expected real, synthetic, synthetic+ft, diffusion, diffusion+ft)");
}

std::string seg_mode_name(SegMode m) {
  switch (m) {
  case SegMode::real: return "real";
  case SegMode::synthetic: return "synthetic";
  case SegMode::synthetic_ft: return "synthetic+ft";
  case SegMode::diffusion: return "diffusion";
  case SegMode::diffusion_ft: return "diffusion+ft";
  }
  return "real";
}

} // namespace metsyn
