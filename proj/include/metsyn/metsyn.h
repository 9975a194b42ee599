/* C interface to the metsyn library.
 *
 * Objects are opaque handles owned by the caller and released with the
 * matching *_free function. Every call returns an ms_status; on failure
 * ms_last_error() describes the problem (per thread, valid until the next
 * failing call on that thread).
 */
#ifndef METSYN_H
#define METSYN_H

#include <stddef.h>
#include <stdint.h>

#if defined(METSYN_BUILDING)
#define MS_API __attribute__((visibility("default")))
#else
#define MS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values 2..4 double as CLI exit codes. */
typedef enum ms_status {
  MS_OK = 0,
  MS_ERR_OTHER = 1,
  MS_ERR_CONFIG = 2,
  MS_ERR_INPUT = 3,
  MS_ERR_NUMERIC = 4,
  MS_ERR_EXHAUSTED = 5,
  MS_ERR_ARGUMENT = 6
} ms_status;

typedef struct ms_volume ms_volume;
typedef struct ms_mask ms_mask;
typedef struct ms_schedule ms_schedule;
typedef struct ms_context ms_context;

MS_API const char *ms_version(void);
MS_API const char *ms_last_error(void);
MS_API const char *ms_status_name(ms_status s);

/* ---- volumes and masks (x-fastest layout) ------------------------------ */

MS_API ms_status ms_volume_create(const int64_t dims[3], const double spacing[3],
                                  const float *data, ms_volume **out);
MS_API ms_status ms_volume_read(const char *path, ms_volume **out);
MS_API ms_status ms_volume_write(const ms_volume *v, const char *path);
MS_API void ms_volume_free(ms_volume *v);
MS_API void ms_volume_dims(const ms_volume *v, int64_t dims[3]);
MS_API void ms_volume_spacing(const ms_volume *v, double spacing[3]);
/* Borrowed pointer to dims[0]*dims[1]*dims[2] floats. */
MS_API const float *ms_volume_data(const ms_volume *v);

MS_API ms_status ms_mask_create(const int64_t dims[3], const double spacing[3],
                                const uint8_t *data, ms_mask **out);
MS_API ms_status ms_mask_read(const char *path, ms_mask **out);
MS_API ms_status ms_mask_write(const ms_mask *m, const char *path);
MS_API void ms_mask_free(ms_mask *m);
MS_API void ms_mask_dims(const ms_mask *m, int64_t dims[3]);
MS_API const uint8_t *ms_mask_data(const ms_mask *m);

MS_API ms_status ms_resample_isotropic(const ms_volume *v, double target_spacing, ms_volume **out);
MS_API ms_status ms_resample_mask(const ms_mask *m, double target_spacing, ms_mask **out);
MS_API ms_status ms_standardize(const ms_volume *v, ms_volume **out, double *mean, double *std_dev);

/* ---- metrics ----------------------------------------------------------- */

typedef struct ms_metrics {
  double dice;
  double hd_mm;
  double hd95_mm;
  double assd_mm;
  int empty_flag;
  int postprocessed;
} ms_metrics;

MS_API ms_status ms_evaluate(const ms_mask *prediction, const ms_mask *reference,
                             int postprocess, double min_component_mm3, ms_metrics *out);

/* ---- statistics -------------------------------------------------------- */

MS_API ms_status ms_kruskal_wallis(const double *const *groups, const size_t *sizes,
                                   size_t n_groups, double *h, double *p);
MS_API ms_status ms_mann_whitney_u(const double *a, size_t na, const double *b, size_t nb,
                                   double *u, double *p);
MS_API ms_status ms_wilcoxon_signed_rank(const double *a, const double *b, size_t n, double *w,
                                         double *p);

/* ---- diffusion --------------------------------------------------------- */

MS_API ms_status ms_schedule_linear(int T, double beta_1, double beta_T, ms_schedule **out);
MS_API void ms_schedule_free(ms_schedule *s);
MS_API int ms_schedule_T(const ms_schedule *s);
/* t in [1, T] for beta, [0, T] for alpha_bar. */
MS_API ms_status ms_schedule_beta(const ms_schedule *s, int t, double *out);
MS_API ms_status ms_schedule_alpha_bar(const ms_schedule *s, int t, double *out);
/* Writes n_steps timesteps into out. */
MS_API ms_status ms_ddim_steps(int T, int n_steps, int *out);

/* ---- pipeline stages --------------------------------------------------- */

/* config_path may be NULL for the built-in defaults. */
MS_API ms_status ms_context_create(const char *config_path, ms_context **out);
MS_API void ms_context_free(ms_context *ctx);
MS_API ms_status ms_context_set_seed(ms_context *ctx, uint64_t seed);
/* Caps worker threads for every later call in the process; 1 is the reference schedule. */
MS_API ms_status ms_context_set_threads(ms_context *ctx, int threads);
/* Canonical JSON of the effective configuration; borrowed until the next call on ctx. */
MS_API const char *ms_context_config_json(ms_context *ctx);

/* Comma-separated donor id lists may be NULL or empty. */
MS_API ms_status ms_cmd_phantom(ms_context *ctx, const char *out_dir);
MS_API ms_status ms_cmd_preprocess(ms_context *ctx, const char *in_dir, const char *out_dir);
MS_API ms_status ms_cmd_synthesize(ms_context *ctx, const char *in_dir, const char *exclude_donors,
                                   const char *out_dir);
MS_API ms_status ms_cmd_train_denoiser(ms_context *ctx, const char *in_dir, const char *out_dir);
/* lambda 0 takes the configured value. */
MS_API ms_status ms_cmd_refine(ms_context *ctx, const char *in_dir, const char *denoiser_dir,
                               int lambda, const char *out_dir);
/* mode: real, synthetic, synthetic+ft, diffusion, diffusion+ft. */
MS_API ms_status ms_cmd_train_seg(ms_context *ctx, const char *mode, const char *real_dir,
                                  const char *pretrain_dir, int train_size,
                                  const char *exclude_donors, const char *out_dir);
MS_API ms_status ms_cmd_evaluate(ms_context *ctx, const char *model_dir, const char *in_dir,
                                 const char *exclude_donors, const char *out_dir);
/* model_dir may be NULL. */
MS_API ms_status ms_cmd_variability(ms_context *ctx, const char *in_dir, const char *model_dir,
                                    const char *out_dir);
MS_API ms_status ms_cmd_stats(ms_context *ctx, const char *const *names, const char *const *paths,
                              size_t n_groups, const char *out_dir);

#ifdef __cplusplus
}
#endif

#endif /* METSYN_H */
