#include "mocapfuse/mocapfuse.h"

#include <filesystem>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "mocapfuse/acceptance.hpp"
#include "mocapfuse/config.hpp"
#include "mocapfuse/error.hpp"
#include "mocapfuse/harness.hpp"
#include "mocapfuse/record_io.hpp"
#include "mocapfuse/simulator.hpp"

using namespace mocapfuse;
namespace fs = std::filesystem;

struct mf_config {
  KeyValueConfig kv;
};

struct mf_run_result {
  bool diverged = false;
  bool has_metrics = false;
  std::string metrics;
  size_t epochs = 0;
  double mean_pos_rmse_cm = 0.0;
};

struct mf_batch_result {
  std::string aggregate;
  std::string runs;
};

struct mf_engine {
  std::optional<FusionEngine> engine;
};

namespace {

thread_local std::string g_last_error;

mf_status to_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::kInvalidArgument: return MF_ERR_INVALID_ARGUMENT;
    case ErrorCode::kParse: return MF_ERR_PARSE;
    case ErrorCode::kIo: return MF_ERR_IO;
    case ErrorCode::kDivergence: return MF_ERR_DIVERGENCE;
    case ErrorCode::kInternal: break;
  }
  return MF_ERR_INTERNAL;
}

mf_status fail(mf_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

// Runs fn, mapping exceptions onto status codes and the thread-local message.
template <class Fn>
mf_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(MF_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(MF_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(MF_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(MF_ERR_INTERNAL, "unknown error");
  }
}

const KeyValueConfig& kv_or_empty(const mf_config* cfg) {
  static const KeyValueConfig empty;
  return cfg ? cfg->kv : empty;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorCode::kIo, "cannot create output directory " + dir.string());
  }
}

Metrics metrics_or_throw(const std::vector<EpochRecord>& trace, const GroundTruth& truth) {
  if (trace.empty()) throw invalid_argument("no IMU epoch was processed");
  return compute_metrics(trace, truth);
}

}  // namespace

extern "C" {

const char* mf_version(void) { return "0.1.0"; }

const char* mf_status_name(mf_status s) {
  switch (s) {
    case MF_OK: return "ok";
    case MF_ERR_INVALID_ARGUMENT: return "invalid argument";
    case MF_ERR_PARSE: return "parse error";
    case MF_ERR_IO: return "i/o error";
    case MF_ERR_DIVERGENCE: return "filter divergence";
    case MF_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* mf_last_error(void) { return g_last_error.c_str(); }

mf_status mf_config_new(mf_config** out) {
  if (!out) return fail(MF_ERR_INVALID_ARGUMENT, "out is null");
  return guarded([&] {
    *out = new mf_config();
    return MF_OK;
  });
}

mf_status mf_config_load(const char* path, mf_config** out) {
  if (!path || !out) return fail(MF_ERR_INVALID_ARGUMENT, "path or out is null");
  return guarded([&] {
    auto c = std::make_unique<mf_config>();
    c->kv = KeyValueConfig::load(path);
    *out = c.release();
    return MF_OK;
  });
}

mf_status mf_config_parse(const char* text, mf_config** out) {
  if (!text || !out) return fail(MF_ERR_INVALID_ARGUMENT, "text or out is null");
  return guarded([&] {
    auto c = std::make_unique<mf_config>();
    c->kv = KeyValueConfig::parse_text(text);
    *out = c.release();
    return MF_OK;
  });
}

mf_status mf_config_set(mf_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return fail(MF_ERR_INVALID_ARGUMENT, "cfg, key or value is null");
  return guarded([&] {
    cfg->kv.set(key, value);
    return MF_OK;
  });
}

void mf_config_free(mf_config* cfg) { delete cfg; }

mf_status mf_simulate(const mf_config* cfg, const char* out_dir) {
  if (!out_dir) return fail(MF_ERR_INVALID_ARGUMENT, "out_dir is null");
  return guarded([&] {
    const ScenarioConfig sc = ScenarioConfig::from_config(kv_or_empty(cfg));
    const Scenario s = simulate(sc);
    ensure_dir(out_dir);
    write_scenario(out_dir, s);
    return MF_OK;
  });
}

mf_status mf_run(const mf_config* cfg, const char* input_dir, const char* out_dir, mf_run_result** out) {
  if (!out) return fail(MF_ERR_INVALID_ARGUMENT, "out is null");
  *out = nullptr;
  return guarded([&] {
    const KeyValueConfig& kv = kv_or_empty(cfg);
    const ScenarioConfig sc = ScenarioConfig::from_config(kv);
    const RunConfig rc = RunConfig::from_config(kv, sc.imu_rate);
    auto res = std::make_unique<mf_run_result>();
    std::vector<EpochRecord> trace;
    std::optional<GroundTruth> truth;
    std::string divergence;

    if (!input_dir) {
      Scenario s = simulate(sc);
      RunResult r = run_scenario(s, rc, out_dir != nullptr);
      trace = std::move(r.trace);
      res->epochs = static_cast<size_t>(r.metrics.epochs);
      res->diverged = r.metrics.diverged;
      res->has_metrics = true;
      res->metrics = r.metrics.to_text(true);
      res->mean_pos_rmse_cm = r.metrics.mean_pos_rmse_cm;
      truth = std::move(s.truth);
    } else {
      const ScenarioFiles files = ScenarioFiles::in(input_dir);
      if (!fs::exists(files.imu)) throw Error(ErrorCode::kIo, "missing " + files.imu.string());
      if (fs::exists(files.truth) && fs::exists(files.truth_params)) {
        truth = load_truth(files.truth, files.truth_params);
      }
      const ChainModel chain = truth ? truth->layout->model() : sc.chain;
      StreamPaths paths;
      paths.imu = files.imu;
      if (fs::exists(files.slam)) paths.slam = files.slam;
      if (fs::exists(files.mocap)) paths.mocap = files.mocap;
      const EventQueue queue = ingest_streams(paths, chain.link_count());
      FusionEngine engine(chain, rc);
      try {
        replay(engine, queue, rc.pos_source);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kDivergence) throw;
        divergence = e.what();
      }
      trace = engine.trace();
      res->epochs = trace.size();
      res->diverged = !divergence.empty();
      if (truth) {
        Metrics m = metrics_or_throw(trace, *truth);
        m.diverged = res->diverged;
        m.divergence_reason = divergence;
        if (engine.srukf_stats()) m.srukf = *engine.srukf_stats();
        res->has_metrics = true;
        res->metrics = m.to_text(true);
        res->mean_pos_rmse_cm = m.mean_pos_rmse_cm;
      } else {
        res->metrics = "epochs = " + std::to_string(trace.size()) + "\ndiverged = " +
                       (res->diverged ? "true" : "false") + "\n";
        if (res->diverged) res->metrics += "divergence_reason = " + divergence + "\n";
      }
    }

    if (out_dir) {
      const fs::path dir(out_dir);
      ensure_dir(dir);
      write_text_file(dir / "metrics.txt", res->metrics);
      write_text_file(dir / "run.cfg", rc.to_config_text());
      if (truth) write_trace(dir / "trace.csv", trace, *truth);
      else write_estimates(dir / "trace.csv", trace);
    }
    const bool diverged = res->diverged;
    *out = res.release();
    return diverged ? fail(MF_ERR_DIVERGENCE, "filter diverged") : MF_OK;
  });
}

int mf_run_result_diverged(const mf_run_result* r) { return r && r->diverged ? 1 : 0; }
int mf_run_result_has_metrics(const mf_run_result* r) { return r && r->has_metrics ? 1 : 0; }
const char* mf_run_result_metrics(const mf_run_result* r) { return r ? r->metrics.c_str() : ""; }
size_t mf_run_result_epochs(const mf_run_result* r) { return r ? r->epochs : 0; }
double mf_run_result_mean_pos_rmse_cm(const mf_run_result* r) { return r ? r->mean_pos_rmse_cm : 0.0; }
void mf_run_result_free(mf_run_result* r) { delete r; }

mf_status mf_batch(const mf_config* cfg, const char* out_dir, mf_batch_result** out) {
  if (!out) return fail(MF_ERR_INVALID_ARGUMENT, "out is null");
  *out = nullptr;
  return guarded([&] {
    const BatchSpec spec = BatchSpec::from_config(kv_or_empty(cfg));
    const BatchResult b = run_batch(spec);
    auto res = std::make_unique<mf_batch_result>();
    res->aggregate = b.aggregate_csv();
    res->runs = b.runs_csv();
    if (out_dir) {
      const fs::path dir(out_dir);
      ensure_dir(dir);
      write_text_file(dir / "aggregate.csv", res->aggregate);
      write_text_file(dir / "runs.csv", res->runs);
    }
    bool diverged = false;
    for (const auto& row : b.metrics) {
      for (const auto& m : row) diverged = diverged || m.diverged;
    }
    *out = res.release();
    return diverged ? fail(MF_ERR_DIVERGENCE, "at least one batch run diverged") : MF_OK;
  });
}

const char* mf_batch_result_aggregate_csv(const mf_batch_result* r) { return r ? r->aggregate.c_str() : ""; }
const char* mf_batch_result_runs_csv(const mf_batch_result* r) { return r ? r->runs.c_str() : ""; }
void mf_batch_result_free(mf_batch_result* r) { delete r; }

mf_status mf_check(uint64_t seed, mf_check_callback callback, void* user, int* failed) {
  return guarded([&] {
    AcceptanceOptions opts;
    opts.seed = seed;
    const auto results = run_acceptance(opts, [&](const CriterionResult& r) {
      if (callback) callback(user, r.id, r.pass ? 1 : 0, format_result(r).c_str());
    });
    int n = 0;
    for (const auto& r : results) n += r.pass ? 0 : 1;
    if (failed) *failed = n;
    return MF_OK;
  });
}

mf_status mf_engine_new(const mf_config* cfg, mf_engine** out) {
  if (!out) return fail(MF_ERR_INVALID_ARGUMENT, "out is null");
  *out = nullptr;
  return guarded([&] {
    const KeyValueConfig& kv = kv_or_empty(cfg);
    const ScenarioConfig sc = ScenarioConfig::from_config(kv);
    auto e = std::make_unique<mf_engine>();
    e->engine.emplace(sc.chain, RunConfig::from_config(kv, sc.imu_rate));
    *out = e.release();
    return MF_OK;
  });
}

mf_status mf_engine_push_imu(mf_engine* e, double t, int link, const double f[3], const double w[3]) {
  if (!e || !f || !w) return fail(MF_ERR_INVALID_ARGUMENT, "engine, f or w is null");
  return guarded([&] {
    ImuSample s;
    s.t = t;
    s.link = link;
    s.f = Vec3(f[0], f[1], f[2]);
    s.w = Vec3(w[0], w[1], w[2]);
    e->engine->push_imu(s);
    return MF_OK;
  });
}

mf_status mf_engine_push_fix(mf_engine* e, double t, const double p[3], double sigma) {
  if (!e || !p) return fail(MF_ERR_INVALID_ARGUMENT, "engine or p is null");
  return guarded([&] {
    e->engine->push_fix({t, Vec3(p[0], p[1], p[2]), sigma});
    return MF_OK;
  });
}

mf_status mf_engine_finish(mf_engine* e) {
  if (!e) return fail(MF_ERR_INVALID_ARGUMENT, "engine is null");
  return guarded([&] {
    e->engine->finish();
    return MF_OK;
  });
}

int mf_engine_link_count(const mf_engine* e) {
  return e ? e->engine->layout()->link_count() : 0;
}

size_t mf_engine_epoch_count(const mf_engine* e) { return e ? e->engine->trace().size() : 0; }

mf_status mf_engine_link_pose(const mf_engine* e, int link, double* t, double p[3], double q[4]) {
  if (!e || !p || !q) return fail(MF_ERR_INVALID_ARGUMENT, "engine, p or q is null");
  return guarded([&] {
    const auto& trace = e->engine->trace();
    if (trace.empty()) throw invalid_argument("no corrected epoch yet");
    const EpochRecord& r = trace.back();
    if (link < 0 || link >= r.x.layout().link_count()) {
      throw invalid_argument("link id " + std::to_string(link) + " out of range");
    }
    if (t) *t = r.t;
    const Vec3 pos = r.x.p(link);
    const Vec4 qc = r.x.q(link).coeffs();
    for (int i = 0; i < 3; ++i) p[i] = pos(i);
    for (int i = 0; i < 4; ++i) q[i] = qc(i);
    return MF_OK;
  });
}

void mf_engine_free(mf_engine* e) { delete e; }

}  // extern "C"
