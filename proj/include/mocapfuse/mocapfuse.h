/* C interface of the mocapfuse pose-fusion engine.
 *
 * Every call returns an mf_status. On failure the message of the most recent
 * error on the calling thread is available from mf_last_error(). Objects are
 * opaque handles released with their *_free function; passing NULL to a free
 * function is allowed.
 */
#ifndef MOCAPFUSE_H
#define MOCAPFUSE_H

#include <stddef.h>
#include <stdint.h>

#if defined(MOCAPFUSE_BUILDING_LIBRARY)
#define MF_API __attribute__((visibility("default")))
#else
#define MF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mf_status {
  MF_OK = 0,
  MF_ERR_INVALID_ARGUMENT = 1,
  MF_ERR_PARSE = 2,
  MF_ERR_IO = 3,
  MF_ERR_DIVERGENCE = 4,
  MF_ERR_INTERNAL = 5
} mf_status;

MF_API const char* mf_version(void);
MF_API const char* mf_status_name(mf_status status);
/* Thread-local; empty string when the last call on this thread succeeded. */
MF_API const char* mf_last_error(void);

/* ---- configuration: flat key = value settings ---- */

typedef struct mf_config mf_config;

MF_API mf_status mf_config_new(mf_config** out);
MF_API mf_status mf_config_load(const char* path, mf_config** out);
MF_API mf_status mf_config_parse(const char* text, mf_config** out);
MF_API mf_status mf_config_set(mf_config* cfg, const char* key, const char* value);
MF_API void mf_config_free(mf_config* cfg);

/* ---- one-shot verbs ---- */

/* Simulates the configured scenario and writes imu.csv, slam.csv, mocap.csv,
 * truth.csv, truth_params.cfg and scenario.cfg into out_dir. */
MF_API mf_status mf_simulate(const mf_config* cfg, const char* out_dir);

typedef struct mf_run_result mf_run_result;

/* Runs one filter variant. With input_dir NULL the scenario is simulated from
 * cfg; otherwise stream files are read from input_dir, and metrics are computed
 * only if truth files are present. If out_dir is not NULL, metrics.txt,
 * trace.csv and run.cfg are written there. Returns MF_ERR_DIVERGENCE when the
 * filter diverged; *out is still set so the partial result can be inspected. */
MF_API mf_status mf_run(const mf_config* cfg, const char* input_dir, const char* out_dir,
                        mf_run_result** out);
MF_API int mf_run_result_diverged(const mf_run_result* r);
MF_API int mf_run_result_has_metrics(const mf_run_result* r);
/* key = value metrics text, owned by the result. */
MF_API const char* mf_run_result_metrics(const mf_run_result* r);
MF_API size_t mf_run_result_epochs(const mf_run_result* r);
MF_API double mf_run_result_mean_pos_rmse_cm(const mf_run_result* r);
MF_API void mf_run_result_free(mf_run_result* r);

typedef struct mf_batch_result mf_batch_result;

/* Scenario matrix times the four filter variants. Writes aggregate.csv and
 * runs.csv when out_dir is not NULL. Returns MF_ERR_DIVERGENCE if any run
 * diverged; *out is still set. */
MF_API mf_status mf_batch(const mf_config* cfg, const char* out_dir, mf_batch_result** out);
MF_API const char* mf_batch_result_aggregate_csv(const mf_batch_result* r);
MF_API const char* mf_batch_result_runs_csv(const mf_batch_result* r);
MF_API void mf_batch_result_free(mf_batch_result* r);

/* Acceptance suite. `callback` receives each criterion as it finishes. *failed
 * receives the number of failed criteria. */
typedef void (*mf_check_callback)(void* user, int id, int passed, const char* line);
MF_API mf_status mf_check(uint64_t seed, mf_check_callback callback, void* user, int* failed);

/* ---- streaming engine ---- */

typedef struct mf_engine mf_engine;

/* Chain, filter and noise settings come from cfg (NULL for defaults). */
MF_API mf_status mf_engine_new(const mf_config* cfg, mf_engine** out);
MF_API mf_status mf_engine_push_imu(mf_engine* e, double t, int link, const double f[3],
                                    const double w[3]);
MF_API mf_status mf_engine_push_fix(mf_engine* e, double t, const double p[3], double sigma);
MF_API mf_status mf_engine_finish(mf_engine* e);
MF_API int mf_engine_link_count(const mf_engine* e);
/* Number of corrected epochs so far. */
MF_API size_t mf_engine_epoch_count(const mf_engine* e);
/* Latest corrected estimate of one link: time, position (m), attitude [w, x, y, z]. */
MF_API mf_status mf_engine_link_pose(const mf_engine* e, int link, double* t, double p[3],
                                     double q[4]);
MF_API void mf_engine_free(mf_engine* e);

#ifdef __cplusplus
}
#endif

#endif /* MOCAPFUSE_H */
