#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace mocapfuse {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

/// Direction cosine matrix (body to navigation frame).
using Dcm = Eigen::Matrix3d;

/// Rotation vector, radians. Canonical representatives have norm below pi.
struct RotVec {
  Vec3 phi = Vec3::Zero();
};

/// Scalar-first unit quaternion [w, v].
///
/// Construction normalizes, so every instance satisfies |q| = 1 to rounding.
/// q and -q describe the same rotation; canonical() picks the w >= 0 sign.
class UnitQuaternion {
 public:
  UnitQuaternion() = default;
  UnitQuaternion(double w, const Vec3& v);
  explicit UnitQuaternion(const Vec4& wxyz);

  static UnitQuaternion identity() { return {}; }

  double w() const { return w_; }
  const Vec3& v() const { return v_; }
  Vec4 coeffs() const { return {w_, v_.x(), v_.y(), v_.z()}; }

  UnitQuaternion conjugate() const;
  UnitQuaternion canonical() const;

 private:
  double w_ = 1.0;
  Vec3 v_ = Vec3::Zero();
};

/// Quaternion lift of a 3-vector: [0, d].
inline Vec4 pure(const Vec3& d) { return {0.0, d.x(), d.y(), d.z()}; }

/// Raw Hamilton product on 4-vectors (no normalization).
Vec4 quat_product(const Vec4& a, const Vec4& b);

UnitQuaternion quat_mul(const UnitQuaternion& q1, const UnitQuaternion& q2);
inline UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b) {
  return quat_mul(a, b);
}

Dcm quat_to_dcm(const UnitQuaternion& q);
UnitQuaternion dcm_to_quat(const Dcm& r);

UnitQuaternion rotvec_to_quat(const Vec3& phi);
inline UnitQuaternion rotvec_to_quat(const RotVec& r) { return rotvec_to_quat(r.phi); }
Vec3 quat_to_rotvec(const UnitQuaternion& q);

Mat3 skew(const Vec3& v);

/// Rotation angle of a * b^-1, in [0, pi].
double rotation_angle_between(const UnitQuaternion& a, const UnitQuaternion& b);

/// Roll, pitch, yaw (ZYX convention), radians. Reporting only.
Vec3 euler_zyx(const UnitQuaternion& q);

Mat3 rot_x(double a);
Mat3 rot_y(double a);
Mat3 rot_z(double a);

}  // namespace mocapfuse
