#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mocapfuse/body_model.hpp"
#include "mocapfuse/ekf.hpp"
#include "mocapfuse/measurements.hpp"
#include "mocapfuse/simulator.hpp"
#include "mocapfuse/srukf.hpp"

namespace mocapfuse {

class KeyValueConfig;

enum class FilterKind { kEkf, kSrukf };
enum class PositionSource { kSlam, kMocap, kNone };
enum class GravityMode { kThroughout, kStartup, kOff };

const char* to_string(FilterKind f);
const char* to_string(PositionSource p);
const char* to_string(GravityMode g);
FilterKind parse_filter(const std::string& s);
PositionSource parse_pos_source(const std::string& s);
GravityMode parse_gravity_mode(const std::string& s);

struct RunConfig {
  FilterKind filter = FilterKind::kEkf;
  PositionSource pos_source = PositionSource::kSlam;
  NoiseConfig noise = NoiseConfig::table_defaults(100.0);
  bool joint_position = true;
  bool joint_velocity = true;
  GravityMode gravity = GravityMode::kThroughout;
  StationaryThresholds stationary;
  double kappa = 0.0;
  double level_window = 1.0;      // s of initial standstill used for leveling
  double divergence_limit = 1e5;  // m, any position beyond this counts as divergence

  /// "EKF-S", "SRUKF-V", "EKF-N" (no position source), ...
  std::string variant_name() const;

  static RunConfig from_config(const KeyValueConfig& cfg, double imu_rate);
  std::string to_config_text() const;
};

/// Estimate after the correction at one IMU epoch.
struct EpochRecord {
  double t = 0.0;
  NavState x;
  double cycle_ms = 0.0;
  int channels = 0;
  int gravity_links = 0;
};

struct Event {
  enum class Kind { kImu = 0, kSlam = 1, kMocap = 2 };
  double t = 0.0;
  Kind kind = Kind::kImu;
  size_t index = 0;
};

/// All streams of one run and their merged, time-ordered event list.
struct EventQueue {
  std::vector<ImuSample> imu;
  std::vector<PositionFix> slam;
  std::vector<PositionFix> mocap;
  std::vector<Event> events;
};

/// Merges the streams (IMU before fixes at equal time). Enforces per-stream
/// monotonic timestamps and link ids in [0, link_count).
EventQueue make_queue(std::vector<ImuSample> imu, std::vector<PositionFix> slam,
                      std::vector<PositionFix> mocap, int link_count);

struct StreamPaths {
  std::filesystem::path imu;
  std::optional<std::filesystem::path> slam;
  std::optional<std::filesystem::path> mocap;
};

EventQueue ingest_streams(const StreamPaths& paths, int link_count);

/// Incremental fusion loop. Feed time-ordered samples and fixes; each IMU epoch is
/// corrected once the following epoch is complete, then propagated to it.
class FusionEngine {
 public:
  FusionEngine(ChainModel chain, RunConfig cfg);
  ~FusionEngine();
  FusionEngine(FusionEngine&&) noexcept;
  FusionEngine& operator=(FusionEngine&&) noexcept;

  /// Skips gravity leveling and starts from x0.
  void set_initial_state(const NavState& x0);
  /// Called after every processed epoch, outside the cycle timing.
  void set_epoch_hook(std::function<void(const FusionEngine&)> hook) { hook_ = std::move(hook); }

  void push_imu(const ImuSample& s);
  void push_fix(const PositionFix& f);
  /// Processes everything still buffered. No more input is accepted afterwards.
  void finish();

  const std::vector<EpochRecord>& trace() const { return trace_; }
  bool initialized() const;
  const NavState& current() const;
  Eigen::MatrixXd covariance() const;
  const SrukfStats* srukf_stats() const;
  /// Lower-triangular covariance factor, null unless the SRUKF runs.
  const Eigen::MatrixXd* sqrt_covariance() const;
  const RunConfig& config() const { return cfg_; }
  const std::shared_ptr<const StateLayout>& layout() const { return layout_; }

 private:
  struct Backend;
  void on_epoch_complete();
  void initialize();
  void process(size_t idx, bool has_next);

  ChainModel chain_;
  RunConfig cfg_;
  std::shared_ptr<const StateLayout> layout_;
  std::unique_ptr<Backend> backend_;
  std::optional<NavState> preset_;

  std::vector<ImuSample> partial_;
  std::deque<std::vector<ImuSample>> epochs_;  // pending, not yet corrected
  std::vector<ImuSample> prev_epoch_;
  std::vector<std::deque<ImuSample>> windows_;
  std::vector<bool> startup_done_;
  std::deque<PositionFix> fixes_;
  std::optional<PositionFix> first_fix_;
  double last_fix_t_ = -1e300;
  double last_imu_t_ = -1e300;
  bool finished_ = false;
  std::vector<EpochRecord> trace_;
  std::function<void(const FusionEngine&)> hook_;
};

/// Feeds the queue to the engine, keeping fixes from the chosen source, then finishes.
void replay(FusionEngine& engine, const EventQueue& queue, PositionSource source);

/// Replays a queue through a FusionEngine using the configured position source.
/// Throws Error(kDivergence) when the filter diverges.
std::vector<EpochRecord> run_filter(const EventQueue& queue, const ChainModel& chain, const RunConfig& cfg,
                                    const NavState* initial = nullptr, SrukfStats* stats = nullptr);

struct LinkMetrics {
  double pos_rmse_cm = 0.0;
  double att_rmse_deg = 0.0;
  Vec3 euler_rmse_deg = Vec3::Zero();  // roll, pitch, yaw
  double max_pos_err_m = 0.0;
  double first_over_1m_s = -1.0;  // time of first position error above 1 m, -1 if never
  double accel_bias_err = 0.0;    // final, m/s^2
  double gyro_bias_err = 0.0;     // final, rad/s
  double accel_bias_rel = 0.0;    // final error / |true|
  double gyro_bias_rel = 0.0;
  double gyro_bias_conv_s = -1.0;  // error stays below 20 % of |true| from here on
  double accel_bias_conv_s = -1.0; // ... 30 %
};

struct SegmentMetrics {
  int joint = 0;
  int owner = 0;
  double final_err_m = 0.0;
  double conv_s = -1.0;  // error stays below the threshold from here on, -1 if never
};

struct Metrics {
  std::vector<LinkMetrics> links;
  std::vector<SegmentMetrics> segments;
  double lever_arm_err_m = 0.0;
  double lever_arm_conv_s = -1.0;
  double mean_pos_rmse_cm = 0.0;
  double mean_att_rmse_deg = 0.0;
  double mean_cycle_ms = 0.0;
  double duration_s = 0.0;
  long epochs = 0;
  bool diverged = false;
  std::string divergence_reason;
  SrukfStats srukf;

  /// Latest segment convergence time, -1 if any segment never converges.
  double segment_conv_s() const;
  /// key = value summary; timing lines only if with_timing.
  std::string to_text(bool with_timing = true) const;
};

inline constexpr double kSegmentThreshold = 0.02;   // m
inline constexpr double kGyroBiasThreshold = 0.20;  // of |b_true|
inline constexpr double kAccelBiasThreshold = 0.30;

/// Pairs each estimate with the nearest truth epoch (skew at most dt/2).
Metrics compute_metrics(const std::vector<EpochRecord>& trace, const GroundTruth& truth);

/// Per-epoch, per-link CSV with position/attitude errors and ZYX Euler angles in degrees.
void write_trace(const std::filesystem::path& path, const std::vector<EpochRecord>& trace,
                 const GroundTruth& truth);

/// Per-epoch, per-link estimates only: t, link, p, v, q and ZYX Euler angles in degrees.
void write_estimates(const std::filesystem::path& path, const std::vector<EpochRecord>& trace);

struct RunResult {
  RunConfig config;
  Metrics metrics;
  std::vector<EpochRecord> trace;
};

/// Simulated scenario through one filter variant. Divergence is reported in the
/// metrics, not thrown.
RunResult run_scenario(const Scenario& scenario, const RunConfig& cfg, bool keep_trace = false,
                       bool true_init = false);

struct BatchSpec {
  std::vector<ScenarioConfig> scenarios;
  std::vector<RunConfig> variants;
  int workers = 0;  // 0 = hardware concurrency

  /// Default matrix: 4 gait + 2 jump scenarios over both paths, four variants.
  static BatchSpec standard(const ScenarioConfig& base, const RunConfig& run_base, int count = 6);
  static BatchSpec from_config(const KeyValueConfig& cfg);
};

struct BatchResult {
  BatchSpec spec;
  std::vector<std::vector<Metrics>> metrics;  // [scenario][variant]

  /// Per-variant mean/SD/min/max of position and attitude RMSE. No timing, so the
  /// output depends only on inputs and seeds.
  std::string aggregate_csv() const;
  /// One row per (scenario, variant), also without timing.
  std::string runs_csv() const;
  /// Mean over scenarios of the per-run mean position RMSE, per variant.
  std::vector<double> mean_pos_rmse_cm() const;
};

BatchResult run_batch(const BatchSpec& spec);

}  // namespace mocapfuse
