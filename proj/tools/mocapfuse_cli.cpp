// mocapfuse command line: simulate, run, batch and check verbs over the C API.
//
// Exit codes: 0 success, 1 input error, 2 filter divergence, 3 acceptance
// criteria failed, 4 internal error.
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mocapfuse/mocapfuse.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitDivergence = 2;
constexpr int kExitCheckFailed = 3;
constexpr int kExitInternal = 4;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string filter;
  std::string pos_source;
  std::string out;
  std::string input;
};

int exit_code(mf_status s) {
  switch (s) {
    case MF_OK: return kExitOk;
    case MF_ERR_DIVERGENCE: return kExitDivergence;
    case MF_ERR_INTERNAL: return kExitInternal;
    default: return kExitInput;
  }
}

int report(mf_status s) {
  if (s != MF_OK) std::fprintf(stderr, "mocapfuse: %s: %s\n", mf_status_name(s), mf_last_error());
  return exit_code(s);
}

class Config {
 public:
  ~Config() { mf_config_free(cfg_); }

  mf_status init(const Options& o) {
    const mf_status s = o.config.empty() ? mf_config_new(&cfg_) : mf_config_load(o.config.c_str(), &cfg_);
    if (s != MF_OK) return s;
    if (o.seed) {
      if (auto r = mf_config_set(cfg_, "seed", std::to_string(*o.seed).c_str()); r != MF_OK) return r;
    }
    if (!o.filter.empty()) {
      if (auto r = mf_config_set(cfg_, "filter", o.filter.c_str()); r != MF_OK) return r;
    }
    if (!o.pos_source.empty()) {
      if (auto r = mf_config_set(cfg_, "pos_source", o.pos_source.c_str()); r != MF_OK) return r;
    }
    return MF_OK;
  }
  const mf_config* get() const { return cfg_; }

 private:
  mf_config* cfg_ = nullptr;
};

int cmd_simulate(const Options& o) {
  Config cfg;
  if (auto s = cfg.init(o); s != MF_OK) return report(s);
  const mf_status s = mf_simulate(cfg.get(), o.out.c_str());
  if (s == MF_OK) std::printf("scenario written to %s\n", o.out.c_str());
  return report(s);
}

int cmd_run(const Options& o) {
  Config cfg;
  if (auto s = cfg.init(o); s != MF_OK) return report(s);
  mf_run_result* r = nullptr;
  const mf_status s = mf_run(cfg.get(), o.input.empty() ? nullptr : o.input.c_str(),
                             o.out.empty() ? nullptr : o.out.c_str(), &r);
  if (r) std::fputs(mf_run_result_metrics(r), stdout);
  mf_run_result_free(r);
  return report(s);
}

int cmd_batch(const Options& o) {
  Config cfg;
  if (auto s = cfg.init(o); s != MF_OK) return report(s);
  mf_batch_result* r = nullptr;
  const mf_status s = mf_batch(cfg.get(), o.out.empty() ? nullptr : o.out.c_str(), &r);
  if (r) std::fputs(mf_batch_result_aggregate_csv(r), stdout);
  mf_batch_result_free(r);
  return report(s);
}

int cmd_check(const Options& o) {
  int failed = 0;
  const mf_status s = mf_check(
      o.seed.value_or(1),
      [](void*, int, int, const char* line) {
        std::printf("%s\n", line);
        std::fflush(stdout);
      },
      nullptr, &failed);
  if (s != MF_OK) return report(s);
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pose fusion for IMU-instrumented arm chains"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "random seed (overrides the config)");
  };
  auto filter_opts = [&o](CLI::App* sub) {
    sub->add_option("--filter", o.filter, "estimator")->check(CLI::IsMember({"ekf", "srukf"}));
    sub->add_option("--pos-source", o.pos_source, "camera position stream")
        ->check(CLI::IsMember({"slam", "mocap", "none"}));
  };

  CLI::App* sim = app.add_subcommand("simulate", "write a synthetic scenario as stream files");
  common(sim);
  sim->add_option("--out", o.out, "output directory")->required();

  CLI::App* run = app.add_subcommand("run", "run one filter variant and report metrics");
  common(run);
  filter_opts(run);
  run->add_option("--out", o.out, "directory for metrics.txt, trace.csv and run.cfg");
  run->add_option("--input", o.input, "directory with recorded streams (simulates when omitted)")
      ->check(CLI::ExistingDirectory);

  CLI::App* batch = app.add_subcommand("batch", "scenario matrix over all four variants");
  common(batch);
  batch->add_option("--out", o.out, "directory for aggregate.csv and runs.csv");

  CLI::App* check = app.add_subcommand("check", "run the acceptance suite");
  check->add_option("--seed", o.seed, "base seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  if (sim->parsed()) return cmd_simulate(o);
  if (run->parsed()) return cmd_run(o);
  if (batch->parsed()) return cmd_batch(o);
  return cmd_check(o);
}
