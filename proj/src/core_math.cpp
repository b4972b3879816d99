#include "mocapfuse/core_math.hpp"

#include "mocapfuse/error.hpp"

#include <algorithm>
#include <cmath>

namespace mocapfuse {

namespace {
constexpr double kSeriesThreshold = 1e-8;
}

UnitQuaternion::UnitQuaternion(double w, const Vec3& v) {
  const double n = std::sqrt(w * w + v.squaredNorm());
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw invalid_argument("quaternion with zero or non-finite norm");
  }
  w_ = w / n;
  v_ = v / n;
}

UnitQuaternion::UnitQuaternion(const Vec4& wxyz)
    : UnitQuaternion(wxyz(0), wxyz.tail<3>()) {}

UnitQuaternion UnitQuaternion::conjugate() const {
  UnitQuaternion c;
  c.w_ = w_;
  c.v_ = -v_;
  return c;
}

UnitQuaternion UnitQuaternion::canonical() const {
  if (w_ >= 0.0) return *this;
  UnitQuaternion c;
  c.w_ = -w_;
  c.v_ = -v_;
  return c;
}

Vec4 quat_product(const Vec4& a, const Vec4& b) {
  const double aw = a(0);
  const double bw = b(0);
  const Vec3 av = a.tail<3>();
  const Vec3 bv = b.tail<3>();
  Vec4 out;
  out(0) = aw * bw - av.dot(bv);
  out.tail<3>() = aw * bv + bw * av + av.cross(bv);
  return out;
}

UnitQuaternion quat_mul(const UnitQuaternion& q1, const UnitQuaternion& q2) {
  return UnitQuaternion(quat_product(q1.coeffs(), q2.coeffs()));
}

Dcm quat_to_dcm(const UnitQuaternion& q) {
  const double w = q.w();
  const double x = q.v().x();
  const double y = q.v().y();
  const double z = q.v().z();
  Dcm r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

UnitQuaternion dcm_to_quat(const Dcm& r) {
  // Shepperd: pick the largest of the four squared components.
  const double tr = r.trace();
  const double c0 = 1 + tr;
  const double c1 = 1 + 2 * r(0, 0) - tr;
  const double c2 = 1 + 2 * r(1, 1) - tr;
  const double c3 = 1 + 2 * r(2, 2) - tr;
  if (c0 >= c1 && c0 >= c2 && c0 >= c3) {
    const double s = 2 * std::sqrt(c0);
    return UnitQuaternion(0.25 * s, Vec3((r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s,
                                         (r(1, 0) - r(0, 1)) / s));
  }
  if (c1 >= c2 && c1 >= c3) {
    const double s = 2 * std::sqrt(c1);
    return UnitQuaternion((r(2, 1) - r(1, 2)) / s,
                          Vec3(0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s));
  }
  if (c2 >= c3) {
    const double s = 2 * std::sqrt(c2);
    return UnitQuaternion((r(0, 2) - r(2, 0)) / s,
                          Vec3((r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s));
  }
  const double s = 2 * std::sqrt(c3);
  return UnitQuaternion((r(1, 0) - r(0, 1)) / s,
                        Vec3((r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s));
}

UnitQuaternion rotvec_to_quat(const Vec3& phi) {
  const double angle = phi.norm();
  if (angle < kSeriesThreshold) {
    return UnitQuaternion(1.0, 0.5 * phi);
  }
  const double half = 0.5 * angle;
  return UnitQuaternion(std::cos(half), (std::sin(half) / angle) * phi);
}

Vec3 quat_to_rotvec(const UnitQuaternion& q) {
  const UnitQuaternion c = q.canonical();
  const double vn = c.v().norm();
  if (vn < kSeriesThreshold) {
    return (2.0 / c.w()) * c.v();
  }
  // atan2 stays well conditioned near both 0 and pi.
  const double angle = 2.0 * std::atan2(vn, c.w());
  return (angle / vn) * c.v();
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

double rotation_angle_between(const UnitQuaternion& a, const UnitQuaternion& b) {
  return quat_to_rotvec(quat_mul(a, b.conjugate())).norm();
}

Vec3 euler_zyx(const UnitQuaternion& q) {
  const Dcm r = quat_to_dcm(q);
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return {roll, pitch, yaw};
}

Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}

Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

}  // namespace mocapfuse
