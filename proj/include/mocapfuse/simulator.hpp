#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mocapfuse/body_model.hpp"
#include "mocapfuse/core_math.hpp"
#include "mocapfuse/ins.hpp"
#include "mocapfuse/measurements.hpp"

namespace mocapfuse {

class KeyValueConfig;

enum class ScenarioKind { kGait, kJump };
enum class PathKind { kOShape, kStraight };

const char* to_string(ScenarioKind k);
const char* to_string(PathKind p);

/// Synthetic arm scenario. The chain must be serial: joint i connects links i and i+1,
/// with the camera on link 0.
struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::kGait;
  PathKind path = PathKind::kOShape;
  ChainModel chain = ChainModel::human_arm();
  std::uint64_t seed = 1;

  double duration = 180.0;  // s
  double imu_rate = 100.0;  // Hz
  double standstill = 2.5;  // s, at both ends
  double ramp = 2.0;        // s, raised-cosine speed ramps
  double speed = 1.0;       // m/s along the path
  double path_radius = 6.0; // m, O-shaped path
  double step_rate = 1.8;   // Hz
  double motion_scale = 1.0;  // 0 gives a static scenario
  double jump_height = 0.25;  // m
  double jump_period = 2.5;   // s between take-offs
  double jump_duration = 0.7; // s

  double accel_noise_density = 9.80665e-6;   // m/s^2/sqrt(Hz)
  double gyro_noise_density = 2.9088821e-6;  // rad/s/sqrt(Hz)
  bool bias_drift = false;
  double accel_bias_instability = 1.4709975e-4;  // m/s^2
  double gyro_bias_instability = 4.8481368e-5;   // rad/s
  double bias_tau = 100.0;                       // s

  double slam_rate = 0.0;       // Hz; 0 means imu_rate / 3
  double slam_jitter = 0.3;     // fraction of the mean interval, < 1
  double slam_dropout = 0.01;   // probability that a fix opens a gap
  int slam_max_gap = 10;        // fixes lost per gap, upper bound
  double slam_sigma = 0.05;     // m
  double slam_drift = 0.0;      // m, amplitude of a slow position bias
  double mocap_sigma = 0.002;   // m
  double joint_play = 0.0;      // m, smooth joint deformation SD

  std::vector<Vec3> accel_bias;  // per link; empty means defaults
  std::vector<Vec3> gyro_bias;
  std::vector<Vec3> segments;    // layout segment order, body frames; empty means defaults
  Vec3 lever_arm{0.06, 0.05, -0.06};

  double dt() const { return 1.0 / imu_rate; }
  double effective_slam_rate() const { return slam_rate > 0.0 ? slam_rate : imu_rate / 3.0; }
  /// IMU samples per link; truth has one more epoch.
  long sample_count() const;

  /// Fills defaulted vectors and checks ranges. Throws Error(kInvalidArgument).
  void finalize();
  static ScenarioConfig from_config(const KeyValueConfig& cfg);
  std::string to_config_text() const;
};

/// Instantaneous truth of one link. w is the body-frame angular rate.
struct LinkTruth {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  UnitQuaternion q;
  Vec3 w = Vec3::Zero();
};

/// Closed-form motion model; every quantity is analytic in t.
class TrajectoryModel {
 public:
  explicit TrajectoryModel(ScenarioConfig cfg);

  std::vector<LinkTruth> evaluate(double t) const;
  double envelope(double t) const;
  /// Path length travelled by link 0's path point up to t.
  double arc_length(double t) const;
  const ScenarioConfig& config() const { return cfg_; }
  const std::shared_ptr<const StateLayout>& layout() const { return layout_; }

 private:
  ScenarioConfig cfg_;
  std::shared_ptr<const StateLayout> layout_;
  std::vector<Mat3> mounting_;
  std::vector<Vec3> parent_arm_;  // per joint, l_{i,i+1} in b_i
  std::vector<Vec3> child_arm_;   // per joint, l_{i+1,i} in b_{i+1}
  std::vector<Vec3> play_phase_;
};

struct TruthEpoch {
  double t = 0.0;
  std::vector<LinkTruth> links;
  std::vector<Vec3> accel_bias;
  std::vector<Vec3> gyro_bias;
  std::vector<bool> stationary;
};

struct GroundTruth {
  std::shared_ptr<const StateLayout> layout;
  double dt = 0.01;
  std::vector<TruthEpoch> epochs;
  std::vector<Vec3> segments;  // layout segment order
  Vec3 lever_arm = Vec3::Zero();

  NavState nav_state(size_t k) const;
  Vec3 camera_position(size_t k) const;
};

GroundTruth gen_trajectory(const ScenarioConfig& cfg);

/// Interval-consistent samples: sample k carries the rate and specific force that
/// carry truth epoch k exactly onto epoch k+1 through the strapdown step, plus
/// bias and white noise. Ordered by time, then link id.
std::vector<ImuSample> synthesize_imu(const GroundTruth& gt, const ScenarioConfig& cfg);

/// Irregular camera fixes at about imu_rate / 3 with jitter, gaps and noise.
std::vector<PositionFix> synthesize_slam(const GroundTruth& gt, const ScenarioConfig& cfg);

/// Camera position at every IMU epoch with mocap-grade noise.
std::vector<PositionFix> synthesize_mocap(const GroundTruth& gt, const ScenarioConfig& cfg);

struct Scenario {
  ScenarioConfig config;
  GroundTruth truth;
  std::vector<ImuSample> imu;
  std::vector<PositionFix> slam;
  std::vector<PositionFix> mocap;
};

Scenario simulate(ScenarioConfig cfg);

}  // namespace mocapfuse
