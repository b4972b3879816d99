/* Exercises the public C API from plain C, linked only against the shared library. */
#include <math.h>
#include <stdio.h>
#include <string.h>

#include "mocapfuse/mocapfuse.h"

static int failures = 0;

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: check failed: %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                     \
    }                                                                 \
  } while (0)

static void test_config(void) {
  mf_config* cfg = NULL;
  CHECK(mf_config_parse("duration = 6\nfilter = srukf\n", &cfg) == MF_OK);
  CHECK(mf_config_set(cfg, "seed", "3") == MF_OK);
  mf_config_free(cfg);

  cfg = NULL;
  CHECK(mf_config_parse("duration 6\n", &cfg) == MF_ERR_PARSE);
  CHECK(cfg == NULL);
  CHECK(strstr(mf_last_error(), ":1") != NULL);

  CHECK(mf_config_load("/nonexistent/run.cfg", &cfg) == MF_ERR_IO);
  CHECK(mf_config_new(NULL) == MF_ERR_INVALID_ARGUMENT);
  CHECK(strlen(mf_status_name(MF_ERR_DIVERGENCE)) > 0);
  CHECK(strlen(mf_version()) > 0);
}

static void test_run(void) {
  mf_config* cfg = NULL;
  CHECK(mf_config_parse("duration = 10\npos_source = mocap\n", &cfg) == MF_OK);
  mf_run_result* r = NULL;
  CHECK(mf_run(cfg, NULL, NULL, &r) == MF_OK);
  CHECK(r != NULL);
  if (r) {
    CHECK(!mf_run_result_diverged(r));
    CHECK(mf_run_result_has_metrics(r));
    CHECK(mf_run_result_epochs(r) > 900);
    CHECK(mf_run_result_mean_pos_rmse_cm(r) < 20.0);
    CHECK(strstr(mf_run_result_metrics(r), "mean_pos_rmse_cm") != NULL);
  }
  mf_run_result_free(r);

  CHECK(mf_config_set(cfg, "filter", "kalman") == MF_OK);
  r = NULL;
  CHECK(mf_run(cfg, NULL, NULL, &r) == MF_ERR_PARSE);
  CHECK(r == NULL);
  CHECK(strstr(mf_last_error(), "kalman") != NULL);
  mf_config_free(cfg);
}

static void test_engine(void) {
  mf_engine* e = NULL;
  CHECK(mf_engine_new(NULL, &e) == MF_OK);
  if (!e) return;
  const int n = mf_engine_link_count(e);
  CHECK(n == 3);
  const double f[3] = {0.0, 0.0, -9.81};
  const double w[3] = {0.0, 0.0, 0.0};
  const double p0[3] = {1.0, 2.0, 0.0};
  for (int k = 0; k < 300; ++k) {
    const double t = 0.01 * k;
    for (int l = 0; l < n; ++l) CHECK(mf_engine_push_imu(e, t, l, f, w) == MF_OK);
    if (k % 3 == 0) CHECK(mf_engine_push_fix(e, t + 0.001, p0, 0.05) == MF_OK);
  }
  CHECK(mf_engine_push_imu(e, 0.0, 0, f, w) != MF_OK);
  CHECK(mf_engine_push_imu(e, 5.0, 7, f, w) == MF_ERR_INVALID_ARGUMENT ||
        mf_engine_push_imu(e, 5.0, 7, f, w) == MF_ERR_PARSE);
  CHECK(mf_engine_finish(e) == MF_OK);
  CHECK(mf_engine_epoch_count(e) > 0);

  double t = 0.0, p[3], q[4];
  CHECK(mf_engine_link_pose(e, 0, &t, p, q) == MF_OK);
  CHECK(fabs(t - 2.99) < 1e-9);
  CHECK(fabs(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3] - 1.0) < 1e-9);
  /* Level and still: the camera link stays within a few cm of the fixes. */
  CHECK(fabs(p[0] - p0[0]) < 0.2 && fabs(p[1] - p0[1]) < 0.2);
  CHECK(mf_engine_link_pose(e, 9, &t, p, q) == MF_ERR_INVALID_ARGUMENT);
  mf_engine_free(e);
}

int main(void) {
  test_config();
  test_run();
  test_engine();
  if (failures) {
    fprintf(stderr, "%d checks failed\n", failures);
    return 1;
  }
  printf("c api: all checks passed\n");
  return 0;
}
