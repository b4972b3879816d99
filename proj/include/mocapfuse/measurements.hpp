#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "mocapfuse/body_model.hpp"
#include "mocapfuse/ins.hpp"

namespace mocapfuse {

/// Externally produced camera position in the navigation frame (SLAM or mocap).
struct PositionFix {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  double sigma = 0.05;
};
using SlamFix = PositionFix;

enum class JointKind { kPosition, kVelocity };

struct JointObservation {
  int joint = 0;
  JointKind kind = JointKind::kPosition;
  double sigma = 0.01;
};

struct StationaryFlag {
  int link = 0;
  double t0 = 0.0;
  double t1 = 0.0;
  bool is_stationary = false;
};

struct StationaryThresholds {
  double gyro = 0.02;   // rad/s, SD of |w|
  double accel = 0.08;  // m/s^2, bound on | mean|f| - g | and on SD of |f|
  double min_window = 0.25;  // s
};

/// p_b - p_a + R_b l_ba - R_a l_ab for joint (a, b); zero when the chain closes.
Vec3 joint_pos_predicted(const NavState& x, int joint);

/// v_b - v_a + R_b (w_b x l_ba) - R_a (w_a x l_ab), with bias-corrected rates.
Vec3 joint_vel_predicted(const NavState& x, int joint, const Vec3& w_hat_a, const Vec3& w_hat_b);

/// p_0 + R_0 l_c for the camera link.
Vec3 camera_pos_predicted(const NavState& x);

/// -R_k f_hat: the gravity vector a stationary link would report.
Vec3 gravity_predicted(const NavState& x, int link, const Vec3& f_hat);

/// Causal standstill test over a window of one link's raw samples.
/// Throws if the window spans less than thresholds.min_window.
StationaryFlag detect_stationary(std::span<const ImuSample> window, double gravity_norm,
                                 const StationaryThresholds& thresholds = {});

enum class ChannelKind { kJointPosition, kJointVelocity, kGravity, kCameraPosition };

/// One 3-D correction. `index` is a joint id, a link id, or an index into
/// EpochMeasurements::fixes depending on the kind.
struct Channel {
  ChannelKind kind = ChannelKind::kJointPosition;
  int index = 0;
  double sigma = 0.0;
};

/// Everything the correction step needs at one epoch.
///
/// f_raw and w_raw hold, per link, the raw specific force and rate representative
/// of the epoch instant. Channels are stacked in insertion order.
struct EpochMeasurements {
  std::vector<Vec3> f_raw;
  std::vector<Vec3> w_raw;
  std::vector<Channel> channels;
  std::vector<PositionFix> fixes;

  void add_joint(const JointObservation& obs);
  /// Contract: only stationary links may be gravity-referenced.
  void add_gravity(const StationaryFlag& flag, double sigma);
  void add_camera_fix(const PositionFix& fix);

  int dim() const { return 3 * static_cast<int>(channels.size()); }
  bool empty() const { return channels.empty(); }
};

/// Stacked nonlinear predictions h(x) in channel order.
Eigen::VectorXd predict_measurements(const NavState& x, const EpochMeasurements& m);
/// Stacked measured values: zero for joint constraints, g_n for gravity, fixes for the camera.
Eigen::VectorXd observed_measurements(const NavState& x, const EpochMeasurements& m);
/// Per-row noise SDs.
Eigen::VectorXd measurement_sigmas(const EpochMeasurements& m);

}  // namespace mocapfuse
