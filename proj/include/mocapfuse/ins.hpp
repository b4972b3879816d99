#pragma once

#include <span>

#include "mocapfuse/body_model.hpp"
#include "mocapfuse/core_math.hpp"

namespace mocapfuse {

/// One accelerometer/gyro sample of one link.
///
/// The sample stamped t_k describes the interval [t_k, t_k + dt): f and w are the
/// specific force (m/s^2) and angular rate (rad/s) the strapdown step consumes.
struct ImuSample {
  double t = 0.0;
  int link = 0;
  Vec3 f = Vec3::Zero();
  Vec3 w = Vec3::Zero();
};

struct CorrectedImu {
  Vec3 f = Vec3::Zero();
  Vec3 w = Vec3::Zero();
};

struct LinkKinematics {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  UnitQuaternion q;
};

/// Largest step the strapdown integrator accepts, seconds.
inline constexpr double kMaxPropagationStep = 0.1;

CorrectedImu correct_imu(const ImuSample& s, const Vec3& ba, const Vec3& bg);

/// One strapdown step: exact quaternion increment, specific force rotated with
/// the pre-step attitude. Throws on dt <= 0 or dt > kMaxPropagationStep.
LinkKinematics propagate_link(const LinkKinematics& in, const Vec3& f_hat, const Vec3& w_hat,
                              double dt, const Vec3& gravity_n);

/// Propagates every link of x with its own bias estimates. `epoch` holds one
/// sample per link, indexed by link id.
void propagate_nav(NavState& x, std::span<const ImuSample> epoch, double dt);

}  // namespace mocapfuse
