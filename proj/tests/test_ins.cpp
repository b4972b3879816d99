#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "mocapfuse/error.hpp"
#include "mocapfuse/ins.hpp"
#include "mocapfuse/simulator.hpp"
#include "test_util.hpp"

using namespace mocapfuse;
using mftest::Rng;

namespace {

const Vec3 kG(0.0, 0.0, 9.81);

LinkKinematics integrate(LinkKinematics s, const Vec3& f, const Vec3& w, double dt, int steps) {
  for (int i = 0; i < steps; ++i) s = propagate_link(s, f, w, dt, kG);
  return s;
}

}  // namespace

TEST(CorrectImu, SubtractsBiases) {
  ImuSample s;
  s.f = Vec3(0.0, 0.0, -9.81);
  s.w = Vec3(0.01, 0.0, 0.0);
  const CorrectedImu c = correct_imu(s, Vec3(0.1, 0.0, 0.0), Vec3(0.01, 0.0, 0.0));
  EXPECT_NEAR(c.f.x(), -0.1, 1e-15);
  EXPECT_NEAR(c.f.z(), -9.81, 1e-15);
  EXPECT_EQ(c.w, Vec3::Zero());
}

TEST(PropagateLink, LevelStandstillIsEquilibrium) {
  LinkKinematics s{Vec3(1, 2, 3), Vec3::Zero(), UnitQuaternion::identity()};
  const LinkKinematics r = integrate(s, Vec3(0, 0, -9.81), Vec3::Zero(), 0.01, 1000);
  EXPECT_LT((r.p - s.p).norm(), 1e-12);
  EXPECT_LT(r.v.norm(), 1e-12);
  EXPECT_LT(rotation_angle_between(r.q, s.q), 1e-15);
}

TEST(PropagateLink, FreeFallGainsGravity) {
  LinkKinematics s{Vec3::Zero(), Vec3::Zero(), UnitQuaternion::identity()};
  const LinkKinematics r = propagate_link(s, Vec3::Zero(), Vec3::Zero(), 0.01, kG);
  EXPECT_LT((r.v - kG * 0.01).norm(), 1e-15);
  EXPECT_LT((r.p - 0.5 * kG * 1e-4).norm(), 1e-15);
}

TEST(PropagateLink, ConstantYawRate) {
  LinkKinematics s{Vec3::Zero(), Vec3::Zero(), UnitQuaternion::identity()};
  const LinkKinematics r = integrate(s, Vec3(0, 0, -9.81), Vec3(0, 0, 1.0), 0.001, 1000);
  EXPECT_NEAR(euler_zyx(r.q).z(), 1.0, 1e-6);
  EXPECT_NEAR(euler_zyx(r.q).x(), 0.0, 1e-12);
}

TEST(PropagateLink, QuaternionStaysUnit) {
  Rng rng(21);
  LinkKinematics s{Vec3::Zero(), Vec3::Zero(), rng.quat()};
  for (int i = 0; i < 10000; ++i) s = propagate_link(s, rng.vec(5.0), rng.vec(3.0), 0.01, kG);
  EXPECT_NEAR(s.q.coeffs().norm(), 1.0, 1e-12);
}

TEST(PropagateLink, RejectsBadSteps) {
  LinkKinematics s;
  EXPECT_THROW(propagate_link(s, Vec3::Zero(), Vec3::Zero(), 0.0, kG), Error);
  EXPECT_THROW(propagate_link(s, Vec3::Zero(), Vec3::Zero(), -0.01, kG), Error);
  EXPECT_THROW(propagate_link(s, Vec3::Zero(), Vec3::Zero(), 0.2, kG), Error);
}

TEST(PropagateLink, StepHalvingConverges) {
  // Body rate and specific force both nonzero, so attitude and velocity couple.
  const LinkKinematics s0{Vec3::Zero(), Vec3(1, 0, 0), UnitQuaternion::identity()};
  const Vec3 f(2.0, 0.5, -9.81), w(0.3, -0.2, 1.0);
  const double T = 1.0;
  const LinkKinematics ref = integrate(s0, f, w, T / 100000, 100000);
  const double e1 = (integrate(s0, f, w, T / 100, 100).p - ref.p).norm();
  const double e2 = (integrate(s0, f, w, T / 200, 200).p - ref.p).norm();
  const double ratio = e1 / e2;
  EXPECT_GT(ratio, 1.8);
  EXPECT_LT(ratio, 4.5);
}

TEST(PropagateNav, UsesEachLinksBiases) {
  const auto lay = mftest::arm_layout();
  NavState x(lay);
  std::vector<ImuSample> epoch(lay->link_count());
  for (int k = 0; k < lay->link_count(); ++k) {
    x.set_q(k, UnitQuaternion::identity());
    x.set_ba(k, Vec3(0.1 * k, 0, 0));
    epoch[k].link = k;
    epoch[k].f = Vec3(0.1 * k, 0, -9.81);
  }
  propagate_nav(x, epoch, 0.01);
  for (int k = 0; k < lay->link_count(); ++k) EXPECT_LT(x.v(k).norm(), 1e-14);
  epoch.pop_back();
  EXPECT_THROW(propagate_nav(x, epoch, 0.01), Error);
}

TEST(PropagateNav, ReproducesSimulatedTruth) {
  ScenarioConfig cfg;
  cfg.duration = 10.0;
  cfg.accel_noise_density = 0.0;
  cfg.gyro_noise_density = 0.0;
  const Scenario sc = simulate(cfg);
  const int n = sc.truth.layout->link_count();
  NavState x = sc.truth.nav_state(0);
  double worst_p = 0.0, worst_q = 0.0;
  for (size_t k = 0; k + 1 < sc.truth.epochs.size(); ++k) {
    std::span<const ImuSample> epoch(sc.imu.data() + k * n, n);
    propagate_nav(x, epoch, cfg.dt());
    const NavState t = sc.truth.nav_state(k + 1);
    for (int l = 0; l < n; ++l) {
      worst_p = std::max(worst_p, (x.p(l) - t.p(l)).norm());
      worst_q = std::max(worst_q, rotation_angle_between(x.q(l), t.q(l)));
    }
  }
  EXPECT_LT(worst_p, 1e-3);
  EXPECT_LT(worst_q, 1e-4);
}
