#pragma once

#include <span>

#include <Eigen/Core>

#include "mocapfuse/body_model.hpp"
#include "mocapfuse/ins.hpp"
#include "mocapfuse/measurements.hpp"

namespace mocapfuse {

class KeyValueConfig;

/// Process, measurement and initial-uncertainty settings shared by both filters.
struct NoiseConfig {
  double accel_noise_density = 9.80665e-6;   // m/s^2/sqrt(Hz)
  double gyro_noise_density = 2.9088821e-6;  // rad/s/sqrt(Hz)
  double accel_bias_psd = 4.3e-10;           // (m/s^2)^2/s
  double gyro_bias_psd = 4.7e-11;            // (rad/s)^2/s
  double segment_psd = 0.0;                  // m^2/s, segments and camera lever arm
  double joint_pos_sigma = 0.01;             // m
  double joint_vel_sigma = 0.01;             // m/s
  double gravity_sigma = 0.08;               // m/s^2, stationarity acceptance band

  double init_pos = 0.10;
  double init_vel = 0.01;
  double init_att = 0.017453292519943295;   // 1 deg
  double init_gyro_bias = 0.0017453292519943296;  // 0.1 deg/s
  double init_accel_bias = 0.1;
  double init_segment = 0.10;
  double init_lever_arm = 0.10;

  /// Sensor-derived defaults at the given IMU rate.
  static NoiseConfig table_defaults(double imu_rate_hz);

  void validate() const;
  void apply(const KeyValueConfig& cfg);
  std::string to_config_text() const;
};

struct EkfState {
  NavState x;
  Eigen::MatrixXd P;
  double t = 0.0;
};

/// Diagonal initial covariance from the NoiseConfig initial SDs.
Eigen::MatrixXd initial_covariance(const StateLayout& layout, const NoiseConfig& noise);

/// Continuous-time error dynamics de/dt = F e at x, with one raw sample per link.
Eigen::MatrixXd assemble_F(const NavState& x, std::span<const ImuSample> epoch);

/// Diagonal of Q_d = Q_c dt.
Eigen::VectorXd process_noise_diag(const StateLayout& layout, const NoiseConfig& noise, double dt);

/// P' = (I + F dt) P (I + F dt)^T + Q_d, resymmetrized.
Eigen::MatrixXd propagate_cov(const Eigen::MatrixXd& P, const Eigen::MatrixXd& F,
                              const Eigen::VectorXd& qd_diag, double dt);
Eigen::MatrixXd propagate_cov(const Eigen::MatrixXd& P, const Eigen::MatrixXd& F,
                              const StateLayout& layout, const NoiseConfig& noise, double dt);

/// 3 x error_dim rows of one channel, linearized at x.
Eigen::MatrixXd assemble_H(const Channel& channel, const NavState& x, const EpochMeasurements& m);
/// All channels of m stacked in order.
Eigen::MatrixXd assemble_H(const NavState& x, const EpochMeasurements& m);

/// Joseph-form correction on (P, H, residual, R). Returns the error estimate and
/// overwrites P. Throws Error(kDivergence) when H P H^T + R is not positive definite.
Eigen::VectorXd joseph_correct(Eigen::MatrixXd& P, const Eigen::MatrixXd& H,
                               const Eigen::VectorXd& resid, const Eigen::MatrixXd& R);

/// Correction followed by injection into the nominal state (multiplicative attitude reset).
void ekf_update(EkfState& state, const Eigen::MatrixXd& H, const Eigen::VectorXd& resid,
                const Eigen::MatrixXd& R);

class Ekf {
 public:
  Ekf(NavState x0, Eigen::MatrixXd P0, NoiseConfig noise);

  void propagate(std::span<const ImuSample> epoch, double dt);
  void correct(const EpochMeasurements& m);

  const EkfState& state() const { return state_; }
  const NavState& nav() const { return state_.x; }
  const Eigen::MatrixXd& covariance() const { return state_.P; }

 private:
  EkfState state_;
  NoiseConfig noise_;
};

}  // namespace mocapfuse
