/* Plain C client of the shared library. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "metsyn/metsyn.h"

static int failures = 0;

#define EXPECT(cond)                                                   \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                      \
    }                                                                  \
  } while (0)

int main(int argc, char **argv) {
  const char *tmp = argc > 1 ? argv[1] : "/tmp";
  char path[1024];

  EXPECT(strlen(ms_version()) > 0);
  EXPECT(strcmp(ms_status_name(MS_ERR_INPUT), "input error") == 0);

  /* volumes */
  const int64_t dims[3] = {2, 2, 2};
  const double sp[3] = {1.0, 1.0, 1.0};
  float data[8];
  for (int i = 0; i < 8; ++i) data[i] = (float)i;
  ms_volume *v = NULL;
  EXPECT(ms_volume_create(dims, sp, data, &v) == MS_OK);
  snprintf(path, sizeof path, "%s/capi.vvol", tmp);
  EXPECT(ms_volume_write(v, path) == MS_OK);
  ms_volume *r = NULL;
  EXPECT(ms_volume_read(path, &r) == MS_OK);
  EXPECT(r != NULL && memcmp(ms_volume_data(r), data, sizeof data) == 0);
  ms_volume_free(r);

  ms_volume *z = NULL;
  double mean = 0, sd = 0;
  EXPECT(ms_standardize(v, &z, &mean, &sd) == MS_OK);
  EXPECT(fabs(mean - 3.5) < 1e-12);
  ms_volume_free(z);
  ms_volume_free(v);

  const int64_t bad[3] = {0, 2, 2};
  v = NULL;
  EXPECT(ms_volume_create(bad, sp, data, &v) == MS_ERR_ARGUMENT);
  EXPECT(v == NULL);
  EXPECT(strlen(ms_last_error()) > 0);
  snprintf(path, sizeof path, "%s/does-not-exist.vvol", tmp);
  EXPECT(ms_volume_read(path, &v) == MS_ERR_INPUT);

  /* metrics */
  uint8_t a[8] = {1, 1, 0, 0, 0, 0, 0, 0}, b[8] = {1, 0, 0, 0, 0, 0, 0, 0};
  ms_mask *ma = NULL, *mb = NULL;
  EXPECT(ms_mask_create(dims, sp, a, &ma) == MS_OK);
  EXPECT(ms_mask_create(dims, sp, b, &mb) == MS_OK);
  ms_metrics m;
  EXPECT(ms_evaluate(ma, mb, 0, 16.0, &m) == MS_OK);
  EXPECT(fabs(m.dice - 2.0 / 3.0) < 1e-15);
  EXPECT(m.hd_mm == 1.0);
  EXPECT(m.empty_flag == 0);
  ms_mask_free(ma);
  ms_mask_free(mb);

  /* statistics */
  const double x[4] = {1, 2, 3, 4}, y[4] = {5, 6, 7, 8};
  double u = -1, p = -1;
  EXPECT(ms_mann_whitney_u(x, 4, y, 4, &u, &p) == MS_OK);
  EXPECT(u == 0.0 && fabs(p - 2.0 / 70.0) < 1e-12);
  double w = -1;
  EXPECT(ms_wilcoxon_signed_rank(x, y, 4, &w, &p) == MS_OK);
  EXPECT(w == 0.0 && fabs(p - 2.0 / 16.0) < 1e-12);
  const double *groups[2] = {x, y};
  const size_t sizes[2] = {4, 4};
  double h = -1;
  EXPECT(ms_kruskal_wallis(groups, sizes, 2, &h, &p) == MS_OK);
  EXPECT(h > 0.0 && p > 0.0 && p < 0.05);

  /* diffusion */
  ms_schedule *s = NULL;
  EXPECT(ms_schedule_linear(200, 1e-4, 2e-3, &s) == MS_OK);
  EXPECT(ms_schedule_T(s) == 200);
  double beta = 0, ab = 0;
  EXPECT(ms_schedule_beta(s, 200, &beta) == MS_OK && beta == 2e-3);
  EXPECT(ms_schedule_alpha_bar(s, 0, &ab) == MS_OK && ab == 1.0);
  EXPECT(ms_schedule_beta(s, 0, &beta) == MS_ERR_ARGUMENT);
  ms_schedule_free(s);
  int steps[50];
  EXPECT(ms_ddim_steps(200, 50, steps) == MS_OK);
  EXPECT(steps[0] == 200 && steps[1] == 196 && steps[49] == 4);

  /* context */
  ms_context *ctx = NULL;
  EXPECT(ms_context_create(NULL, &ctx) == MS_OK);
  EXPECT(ms_context_set_seed(ctx, 17) == MS_OK);
  EXPECT(strstr(ms_context_config_json(ctx), "\"seed\": 17") != NULL);
  EXPECT(ms_context_set_threads(ctx, 0) == MS_ERR_CONFIG);
  EXPECT(ms_cmd_train_seg(ctx, "sideways", "", "", 0, NULL, tmp) == MS_ERR_CONFIG);
  ms_context_free(ctx);
  snprintf(path, sizeof path, "%s/missing-config.json", tmp);
  ctx = NULL;
  EXPECT(ms_context_create(path, &ctx) == MS_ERR_INPUT);

  if (failures) fprintf(stderr, "%d C API check(s) failed\n", failures);
  else printf("C API checks passed\n");
  return failures ? 1 : 0;
}
