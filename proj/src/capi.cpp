#include "metsyn/metsyn.h"

#include <cstring>
#include <memory>
#include <sstream>
#include <string>

#include "metsyn/diffusion.hpp"
#include "metsyn/metrics.hpp"
#include "metsyn/parallel.hpp"
#include "metsyn/pipeline.hpp"
#include "metsyn/stats.hpp"

struct ms_volume {
  metsyn::Volume v;
};
struct ms_mask {
  metsyn::Mask m;
};
struct ms_schedule {
  metsyn::DiffusionSchedule s;
};
struct ms_context {
  metsyn::RunConfig cfg;
  std::string json;
};

namespace {

thread_local std::string g_last_error;

template <typename F> ms_status guard(F &&f) {
  try {
    f();
    return MS_OK;
  } catch (const metsyn::ConfigError &e) {
    g_last_error = e.what();
    return MS_ERR_CONFIG;
  } catch (const metsyn::InputError &e) {
    g_last_error = e.what();
    return MS_ERR_INPUT;
  } catch (const metsyn::NumericError &e) {
    g_last_error = e.what();
    return MS_ERR_NUMERIC;
  } catch (const metsyn::ExhaustedError &e) {
    g_last_error = e.what();
    return MS_ERR_EXHAUSTED;
  } catch (const metsyn::InvalidArgument &e) {
    g_last_error = e.what();
    return MS_ERR_ARGUMENT;
  } catch (const std::filesystem::filesystem_error &e) {
    g_last_error = e.what();
    return MS_ERR_INPUT;
  } catch (const std::exception &e) {
    g_last_error = e.what();
    return MS_ERR_OTHER;
  } catch (...) {
    g_last_error = "unknown error";
    return MS_ERR_OTHER;
  }
}

void need(const void *p, const char *what) {
  if (!p) throw metsyn::InvalidArgument(std::string(what) + " must not be NULL");
}

std::string str(const char *s) { return s ? s : ""; }

std::vector<std::string> id_list(const char *csv) {
  std::vector<std::string> out;
  if (!csv) return out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

metsyn::Index3 dims3(const int64_t d[3]) { return {d[0], d[1], d[2]}; }
metsyn::Spacing3 spacing3(const double s[3]) { return {s[0], s[1], s[2]}; }

} // namespace

extern "C" {

const char *ms_version(void) { return METSYN_VERSION; }
const char *ms_last_error(void) { return g_last_error.c_str(); }

const char *ms_status_name(ms_status s) {
  switch (s) {
  case MS_OK: return "ok";
  case MS_ERR_OTHER: return "error";
  case MS_ERR_CONFIG: return "config error";
  case MS_ERR_INPUT: return "input error";
  case MS_ERR_NUMERIC: return "numeric error";
  case MS_ERR_EXHAUSTED: return "attempts exhausted";
  case MS_ERR_ARGUMENT: return "invalid argument";
  }
  return "unknown";
}

ms_status ms_volume_create(const int64_t dims[3], const double spacing[3], const float *data,
                           ms_volume **out) {
  return guard([&] {
    need(dims, "dims");
    need(spacing, "spacing");
    need(out, "out");
    auto v = std::make_unique<ms_volume>(ms_volume{metsyn::Volume(dims3(dims), spacing3(spacing))});
    if (data) std::memcpy(v->v.data().data(), data, v->v.size() * sizeof(float));
    if (!metsyn::all_finite(v->v)) throw metsyn::InvalidArgument("volume data must be finite");
    *out = v.release();
  });
}

ms_status ms_volume_read(const char *path, ms_volume **out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new ms_volume{metsyn::read_volume(path)};
  });
}

ms_status ms_volume_write(const ms_volume *v, const char *path) {
  return guard([&] {
    need(v, "volume");
    need(path, "path");
    metsyn::write_volume(v->v, path);
  });
}

void ms_volume_free(ms_volume *v) { delete v; }

void ms_volume_dims(const ms_volume *v, int64_t dims[3]) {
  for (int a = 0; a < 3; ++a) dims[a] = v->v.dims()[a];
}

void ms_volume_spacing(const ms_volume *v, double spacing[3]) {
  for (int a = 0; a < 3; ++a) spacing[a] = v->v.spacing()[a];
}

const float *ms_volume_data(const ms_volume *v) { return v->v.data().data(); }

ms_status ms_mask_create(const int64_t dims[3], const double spacing[3], const uint8_t *data,
                         ms_mask **out) {
  return guard([&] {
    need(dims, "dims");
    need(spacing, "spacing");
    need(out, "out");
    auto m = std::make_unique<ms_mask>(ms_mask{metsyn::Mask(dims3(dims), spacing3(spacing))});
    if (data) std::memcpy(m->m.data().data(), data, m->m.size());
    if (!metsyn::is_binary(m->m)) throw metsyn::InvalidArgument("mask values must be 0 or 1");
    *out = m.release();
  });
}

ms_status ms_mask_read(const char *path, ms_mask **out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new ms_mask{metsyn::read_mask(path)};
  });
}

ms_status ms_mask_write(const ms_mask *m, const char *path) {
  return guard([&] {
    need(m, "mask");
    need(path, "path");
    metsyn::write_mask(m->m, path);
  });
}

void ms_mask_free(ms_mask *m) { delete m; }

void ms_mask_dims(const ms_mask *m, int64_t dims[3]) {
  for (int a = 0; a < 3; ++a) dims[a] = m->m.dims()[a];
}

const uint8_t *ms_mask_data(const ms_mask *m) { return m->m.data().data(); }

ms_status ms_resample_isotropic(const ms_volume *v, double target_spacing, ms_volume **out) {
  return guard([&] {
    need(v, "volume");
    need(out, "out");
    *out = new ms_volume{metsyn::resample_isotropic(v->v, target_spacing)};
  });
}

ms_status ms_resample_mask(const ms_mask *m, double target_spacing, ms_mask **out) {
  return guard([&] {
    need(m, "mask");
    need(out, "out");
    *out = new ms_mask{metsyn::resample_mask(m->m, target_spacing)};
  });
}

ms_status ms_standardize(const ms_volume *v, ms_volume **out, double *mean, double *std_dev) {
  return guard([&] {
    need(v, "volume");
    need(out, "out");
    auto st = metsyn::standardize_intensities(v->v);
    if (mean) *mean = st.mean;
    if (std_dev) *std_dev = st.std;
    *out = new ms_volume{std::move(st.volume)};
  });
}

ms_status ms_evaluate(const ms_mask *prediction, const ms_mask *reference, int postprocess,
                      double min_component_mm3, ms_metrics *out) {
  return guard([&] {
    need(prediction, "prediction");
    need(reference, "reference");
    need(out, "out");
    const auto r = metsyn::evaluate(prediction->m, reference->m,
                                    {postprocess != 0, min_component_mm3});
    *out = {r.dice, r.hd_mm, r.hd95_mm, r.assd_mm, r.empty_flag ? 1 : 0, r.postprocessed ? 1 : 0};
  });
}

ms_status ms_kruskal_wallis(const double *const *groups, const size_t *sizes, size_t n_groups,
                            double *h, double *p) {
  return guard([&] {
    need(groups, "groups");
    need(sizes, "sizes");
    std::vector<metsyn::Sample> gs;
    for (size_t g = 0; g < n_groups; ++g) {
      need(groups[g], "group");
      gs.push_back({"g" + std::to_string(g), {groups[g], groups[g] + sizes[g]}});
    }
    const auto r = metsyn::kruskal_wallis(gs);
    if (h) *h = r.H;
    if (p) *p = r.p;
  });
}

ms_status ms_mann_whitney_u(const double *a, size_t na, const double *b, size_t nb, double *u,
                            double *p) {
  return guard([&] {
    need(a, "a");
    need(b, "b");
    const auto r = metsyn::mann_whitney_u({"a", {a, a + na}}, {"b", {b, b + nb}});
    if (u) *u = r.U;
    if (p) *p = r.p;
  });
}

ms_status ms_wilcoxon_signed_rank(const double *a, const double *b, size_t n, double *w, double *p) {
  return guard([&] {
    need(a, "a");
    need(b, "b");
    const auto r = metsyn::wilcoxon_signed_rank(std::span(a, n), std::span(b, n));
    if (w) *w = r.W;
    if (p) *p = r.p;
  });
}

ms_status ms_schedule_linear(int T, double beta_1, double beta_T, ms_schedule **out) {
  return guard([&] {
    need(out, "out");
    *out = new ms_schedule{metsyn::DiffusionSchedule::linear(T, beta_1, beta_T)};
  });
}

void ms_schedule_free(ms_schedule *s) { delete s; }
int ms_schedule_T(const ms_schedule *s) { return s->s.T(); }

ms_status ms_schedule_beta(const ms_schedule *s, int t, double *out) {
  return guard([&] {
    need(s, "schedule");
    need(out, "out");
    *out = s->s.beta(t);
  });
}

ms_status ms_schedule_alpha_bar(const ms_schedule *s, int t, double *out) {
  return guard([&] {
    need(s, "schedule");
    need(out, "out");
    *out = s->s.alpha_bar(t);
  });
}

ms_status ms_ddim_steps(int T, int n_steps, int *out) {
  return guard([&] {
    need(out, "out");
    const auto steps = metsyn::ddim_steps(T, n_steps);
    std::copy(steps.begin(), steps.end(), out);
  });
}

ms_status ms_context_create(const char *config_path, ms_context **out) {
  return guard([&] {
    need(out, "out");
    auto ctx = std::make_unique<ms_context>();
    if (config_path) ctx->cfg = metsyn::RunConfig::load(config_path);
    *out = ctx.release();
  });
}

void ms_context_free(ms_context *ctx) { delete ctx; }

ms_status ms_context_set_seed(ms_context *ctx, uint64_t seed) {
  return guard([&] {
    need(ctx, "context");
    ctx->cfg.seed = seed;
  });
}

ms_status ms_context_set_threads(ms_context *ctx, int threads) {
  return guard([&] {
    need(ctx, "context");
    if (threads < 1) throw metsyn::ConfigError("--threads must be >= 1");
    metsyn::set_max_threads(static_cast<std::size_t>(threads));
  });
}

const char *ms_context_config_json(ms_context *ctx) {
  ctx->json = ctx->cfg.to_json();
  return ctx->json.c_str();
}

ms_status ms_cmd_phantom(ms_context *ctx, const char *out_dir) {
  return guard([&] {
    need(ctx, "context");
    metsyn::cmd_phantom(ctx->cfg, str(out_dir));
  });
}

ms_status ms_cmd_preprocess(ms_context *ctx, const char *in_dir, const char *out_dir) {
  return guard([&] {
    need(ctx, "context");
    metsyn::cmd_preprocess(ctx->cfg, str(in_dir), str(out_dir));
  });
}

ms_status ms_cmd_synthesize(ms_context *ctx, const char *in_dir, const char *exclude_donors,
                            const char *out_dir) {
  return guard([&] {
    need(ctx, "context");
    metsyn::cmd_synthesize(ctx->cfg, str(in_dir), str(out_dir), id_list(exclude_donors));
  });
}

ms_status ms_cmd_train_denoiser(ms_context *ctx, const char *in_dir, const char *out_dir) {
  return guard([&] {
    need(ctx, "context");
    metsyn::cmd_train_denoiser(ctx->cfg, str(in_dir), str(out_dir));
  });
}

ms_status ms_cmd_refine(ms_context *ctx, const char *in_dir, const char *denoiser_dir, int lambda,
                        const char *out_dir) {
  return guard([&] {
    need(ctx, "context");
    metsyn::cmd_refine(ctx->cfg, str(in_dir), str(denoiser_dir), lambda, str(out_dir));
  });
}

ms_status ms_cmd_train_seg(ms_context *ctx, const char *mode, const char *real_dir,
                           const char *pretrain_dir, int train_size, const char *exclude_donors,
                           const char *out_dir) {
  return guard([&] {
    need(ctx, "context");
    need(mode, "mode");
    metsyn::cmd_train_seg(ctx->cfg, metsyn::parse_seg_mode(mode), str(real_dir), str(pretrain_dir),
                          train_size, id_list(exclude_donors), str(out_dir));
  });
}

ms_status ms_cmd_evaluate(ms_context *ctx, const char *model_dir, const char *in_dir,
                          const char *exclude_donors, const char *out_dir) {
  return guard([&] {
    need(ctx, "context");
    metsyn::cmd_evaluate(ctx->cfg, str(model_dir), str(in_dir), id_list(exclude_donors),
                         str(out_dir));
  });
}

ms_status ms_cmd_variability(ms_context *ctx, const char *in_dir, const char *model_dir,
                             const char *out_dir) {
  return guard([&] {
    need(ctx, "context");
    metsyn::cmd_variability(ctx->cfg, str(in_dir), str(model_dir), str(out_dir));
  });
}

ms_status ms_cmd_stats(ms_context *ctx, const char *const *names, const char *const *paths,
                       size_t n_groups, const char *out_dir) {
  return guard([&] {
    need(ctx, "context");
    need(names, "names");
    need(paths, "paths");
    std::vector<std::pair<std::string, std::filesystem::path>> groups;
    for (size_t i = 0; i < n_groups; ++i) groups.emplace_back(str(names[i]), str(paths[i]));
    metsyn::cmd_stats(ctx->cfg, groups, str(out_dir));
  });
}

} // extern "C"
