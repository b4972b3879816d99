#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "mocapfuse/core_math.hpp"
#include "test_util.hpp"

using namespace mocapfuse;
using mftest::Rng;

namespace {

constexpr double kPi = std::numbers::pi;

// Hamilton product written out from i^2 = j^2 = k^2 = ijk = -1.
Vec4 hamilton(const Vec4& a, const Vec4& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

Vec3 sandwich(const UnitQuaternion& q, const Vec3& d) {
  const Vec4 r = hamilton(hamilton(q.coeffs(), pure(d)), q.conjugate().coeffs());
  return r.tail<3>();
}

}  // namespace

TEST(UnitQuaternion, NormalizesOnConstruction) {
  const UnitQuaternion q(Vec4(2.0, 0.0, 0.0, 0.0));
  EXPECT_DOUBLE_EQ(q.w(), 1.0);
  const UnitQuaternion r(3.0, Vec3(4.0, 0.0, 0.0));
  EXPECT_NEAR(r.coeffs().norm(), 1.0, 1e-15);
}

TEST(UnitQuaternion, CanonicalPicksNonNegativeScalar) {
  const UnitQuaternion q(-0.5, Vec3(0.5, 0.5, 0.5));
  EXPECT_GE(q.canonical().w(), 0.0);
  EXPECT_NEAR(rotation_angle_between(q, q.canonical()), 0.0, 1e-12);
}

TEST(QuatMul, IdentityIsNeutral) {
  Rng rng;
  const UnitQuaternion q = rng.quat();
  EXPECT_TRUE((quat_mul(UnitQuaternion::identity(), q).coeffs() - q.coeffs()).norm() < 1e-15);
}

TEST(QuatMul, PureUnitSquaresToMinusOne) {
  const UnitQuaternion i(0.0, Vec3(1.0, 0.0, 0.0));
  const UnitQuaternion r = quat_mul(i, i);
  EXPECT_NEAR(r.w(), -1.0, 1e-15);
  EXPECT_NEAR(r.v().norm(), 0.0, 1e-15);
}

TEST(QuatMul, MatchesHamiltonTable) {
  Rng rng(3);
  for (int n = 0; n < 200; ++n) {
    const UnitQuaternion a = rng.quat(), b = rng.quat();
    EXPECT_LT((quat_mul(a, b).coeffs() - hamilton(a.coeffs(), b.coeffs())).norm(), 1e-14);
  }
}

TEST(QuatMul, DcmComposition) {
  Rng rng(4);
  for (int n = 0; n < 1000; ++n) {
    const UnitQuaternion a = rng.quat(), b = rng.quat();
    const Mat3 lhs = quat_to_dcm(quat_mul(a, b));
    const Mat3 rhs = quat_to_dcm(a) * quat_to_dcm(b);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(QuatToDcm, IdentityAndQuarterTurn) {
  EXPECT_TRUE(quat_to_dcm(UnitQuaternion::identity()).isApprox(Mat3::Identity()));
  const UnitQuaternion qz(std::cos(kPi / 4), Vec3(0, 0, std::sin(kPi / 4)));
  const Vec3 r = quat_to_dcm(qz) * Vec3(1, 0, 0);
  EXPECT_NEAR(r.x(), 0.0, 1e-15);
  EXPECT_NEAR(r.y(), 1.0, 1e-15);
  EXPECT_NEAR(r.z(), 0.0, 1e-15);
}

TEST(QuatToDcm, MatchesSandwichProduct) {
  Rng rng(5);
  for (int n = 0; n < 1000; ++n) {
    const UnitQuaternion q = rng.quat();
    const Vec3 d = rng.vec(2.0);
    EXPECT_LT((quat_to_dcm(q) * d - sandwich(q, d)).norm(), 1e-12);
  }
}

TEST(QuatToDcm, OrthonormalWithUnitDeterminant) {
  Rng rng(6);
  for (int n = 0; n < 100; ++n) {
    const Mat3 r = quat_to_dcm(rng.quat());
    EXPECT_LT((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-14);
  }
}

TEST(DcmToQuat, RoundTrip) {
  Rng rng(7);
  for (int n = 0; n < 1000; ++n) {
    const UnitQuaternion q = rng.quat();
    EXPECT_LT(rotation_angle_between(dcm_to_quat(quat_to_dcm(q)), q), 1e-12);
  }
  // Near half turns, where the trace-based branch is ill conditioned.
  for (const Vec3 axis : {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(1, 1, 1).normalized()}) {
    const UnitQuaternion q = rotvec_to_quat(axis * (kPi - 1e-9));
    EXPECT_LT(rotation_angle_between(dcm_to_quat(quat_to_dcm(q)), q), 1e-8);
  }
}

TEST(RotvecToQuat, ZeroAndHalfTurn) {
  const UnitQuaternion q0 = rotvec_to_quat(Vec3::Zero());
  EXPECT_DOUBLE_EQ(q0.w(), 1.0);
  const UnitQuaternion qx = rotvec_to_quat(Vec3(kPi, 0, 0));
  EXPECT_NEAR(qx.w(), 0.0, 1e-15);
  EXPECT_NEAR(qx.v().x(), 1.0, 1e-15);
}

TEST(RotvecToQuat, SmallAngleRegime) {
  Rng rng(8);
  for (int n = 0; n < 100; ++n) {
    const Vec3 phi = rng.vec().normalized() * 1e-3;
    const UnitQuaternion q = rotvec_to_quat(phi);
    const Vec4 approx(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
    // Remainder of cos and sin at half angle 5e-4 is below theta^2 / 8.
    EXPECT_LT((q.coeffs() - approx).norm(), phi.squaredNorm() / 8 * (1 + 1e-3));
  }
}

TEST(RotvecToQuat, TinyAnglesStayAccurate) {
  const Vec3 phi(1e-12, -2e-12, 3e-12);
  const UnitQuaternion q = rotvec_to_quat(phi);
  EXPECT_LT((quat_to_rotvec(q) - phi).norm(), 1e-20);
}

TEST(QuatToRotvec, IdentityAndHalfTurn) {
  EXPECT_EQ(quat_to_rotvec(UnitQuaternion::identity()), Vec3::Zero());
  const Vec3 r = quat_to_rotvec(UnitQuaternion(0.0, Vec3(0, 1, 0)));
  EXPECT_NEAR(r.y(), kPi, 1e-12);
  EXPECT_NEAR(r.x(), 0.0, 1e-15);
}

TEST(QuatToRotvec, ChartRoundTrip) {
  Rng rng(9);
  for (int n = 0; n < 1000; ++n) {
    const Vec3 phi = rng.rotvec();
    EXPECT_LT((quat_to_rotvec(rotvec_to_quat(phi)) - phi).norm(), 1e-9);
    const UnitQuaternion q = rng.quat();
    EXPECT_LT(rotation_angle_between(rotvec_to_quat(quat_to_rotvec(q)), q), 1e-9);
  }
}

TEST(QuatToRotvec, SignOfQuaternionIrrelevant) {
  Rng rng(10);
  for (int n = 0; n < 100; ++n) {
    const UnitQuaternion q = rng.quat();
    const UnitQuaternion m(-q.w(), -q.v());
    EXPECT_LT((quat_to_rotvec(q) - quat_to_rotvec(m)).norm(), 1e-12);
  }
}

TEST(Skew, CrossProduct) {
  EXPECT_EQ(skew(Vec3::Zero()), Mat3::Zero());
  EXPECT_EQ(skew(Vec3(1, 0, 0)) * Vec3(0, 1, 0), Vec3(0, 0, 1));
  Rng rng(11);
  for (int n = 0; n < 100; ++n) {
    const Vec3 v = rng.vec(), w = rng.vec();
    EXPECT_LT((skew(v) * w + skew(w) * v).norm(), 1e-14);
    EXPECT_LT((skew(v) * w - v.cross(w)).norm(), 1e-14);
  }
}

TEST(SmallRotation, DcmIsFirstOrderInPhi) {
  Rng rng(12);
  for (int n = 0; n < 200; ++n) {
    const Vec3 phi = rng.vec().normalized() * rng.uniform(0.0, 0.01);
    const Mat3 r = quat_to_dcm(rotvec_to_quat(phi));
    const Mat3 lin = Mat3::Identity() + skew(phi);
    EXPECT_LE((r - lin).cwiseAbs().maxCoeff(), phi.squaredNorm() / 2 + 1e-12);
  }
}

TEST(EulerZyx, RecoversComposedAngles) {
  const double roll = 0.3, pitch = -0.4, yaw = 1.2;
  const Mat3 r = rot_z(yaw) * rot_y(pitch) * rot_x(roll);
  const Vec3 e = euler_zyx(dcm_to_quat(r));
  EXPECT_NEAR(e.x(), roll, 1e-12);
  EXPECT_NEAR(e.y(), pitch, 1e-12);
  EXPECT_NEAR(e.z(), yaw, 1e-12);
}

TEST(RotationAngleBetween, MatchesRotvecNorm) {
  Rng rng(13);
  for (int n = 0; n < 100; ++n) {
    const UnitQuaternion q = rng.quat();
    const Vec3 phi = rng.rotvec(3.0);
    EXPECT_NEAR(rotation_angle_between(quat_mul(rotvec_to_quat(phi), q), q), phi.norm(), 1e-9);
  }
}
