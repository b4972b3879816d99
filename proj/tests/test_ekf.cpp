#include <cmath>
#include <vector>

#include <Eigen/Cholesky>
#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "mocapfuse/ekf.hpp"
#include "mocapfuse/error.hpp"
#include "test_util.hpp"

using namespace mocapfuse;
using mftest::Rng;

namespace {

std::vector<ImuSample> random_epoch(Rng& rng, int n) {
  std::vector<ImuSample> e(n);
  for (int k = 0; k < n; ++k) {
    e[k].link = k;
    e[k].f = rng.vec(5.0);
    e[k].w = rng.vec(1.0);
  }
  return e;
}

EpochMeasurements all_channels(Rng& rng, const StateLayout& lay) {
  EpochMeasurements m;
  for (int k = 0; k < lay.link_count(); ++k) {
    m.f_raw.push_back(rng.vec(5.0));
    m.w_raw.push_back(rng.vec(1.0));
  }
  for (int j = 0; j < lay.joint_count(); ++j) {
    m.add_joint({j, JointKind::kPosition, 0.01});
    m.add_joint({j, JointKind::kVelocity, 0.01});
  }
  for (int k = 0; k < lay.link_count(); ++k) m.add_gravity({k, 0.0, 0.25, true}, 0.08);
  m.add_camera_fix({0.0, rng.vec(), 0.05});
  return m;
}

Eigen::MatrixXd random_spd(Rng& rng, int n, double scale) {
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.normal(scale);
  return a * a.transpose() + 1e-3 * scale * scale * Eigen::MatrixXd::Identity(n, n);
}

// Exact discretization of dP/dt = FP + PF^T + Qc over dt via the Van Loan block exponential.
Eigen::MatrixXd van_loan(const Eigen::MatrixXd& P, const Eigen::MatrixXd& F, const Eigen::MatrixXd& Qc,
                         double dt) {
  const Eigen::Index n = F.rows();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  A.topLeftCorner(n, n) = -F;
  A.topRightCorner(n, n) = Qc;
  A.bottomRightCorner(n, n) = F.transpose();
  const Eigen::MatrixXd B = (A * dt).exp();
  const Eigen::MatrixXd phi = B.bottomRightCorner(n, n).transpose();
  const Eigen::MatrixXd Qd = phi * B.topRightCorner(n, n);
  return phi * P * phi.transpose() + Qd;
}

}  // namespace

TEST(AssembleF, ZeroImuLeavesOnlyKinematicAndBiasBlocks) {
  const auto lay = mftest::arm_layout();
  NavState x(lay);
  for (int k = 0; k < lay->link_count(); ++k) x.set_q(k, UnitQuaternion::identity());
  std::vector<ImuSample> epoch(lay->link_count());
  const Eigen::MatrixXd F = assemble_F(x, epoch);
  Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(lay->error_dim(), lay->error_dim());
  for (int k = 0; k < lay->link_count(); ++k) {
    const LinkSlots& s = lay->link(k);
    expect.block<3, 3>(s.dp, s.dv).setIdentity();
    expect.block<3, 3>(s.dv, s.dba) = -Mat3::Identity();
    expect.block<3, 3>(s.dphi, s.dbg) = -Mat3::Identity();
  }
  EXPECT_EQ((F - expect).cwiseAbs().maxCoeff(), 0.0);
}

TEST(AssembleF, StationaryLinkCouplesAttitudeThroughGravity) {
  Rng rng(41);
  const auto lay = mftest::arm_layout();
  const NavState x = rng.state(lay);
  const Vec3 g = lay->model().gravity_n;
  std::vector<ImuSample> epoch(lay->link_count());
  for (int k = 0; k < lay->link_count(); ++k) epoch[k].f = -(x.dcm(k).transpose() * g) + x.ba(k);
  const Eigen::MatrixXd F = assemble_F(x, epoch);
  for (int k = 0; k < lay->link_count(); ++k) {
    const LinkSlots& s = lay->link(k);
    EXPECT_LT((Mat3(F.block<3, 3>(s.dv, s.dphi)) - skew(g)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(AssembleF, ParameterRowsHaveNoDynamics) {
  Rng rng(42);
  const auto lay = mftest::arm_layout();
  const NavState x = rng.state(lay);
  const Eigen::MatrixXd F = assemble_F(x, random_epoch(rng, lay->link_count()));
  for (int k = 0; k < lay->link_count(); ++k) {
    EXPECT_EQ(F.middleRows<3>(lay->link(k).dba).norm(), 0.0);
    EXPECT_EQ(F.middleRows<3>(lay->link(k).dbg).norm(), 0.0);
  }
  for (const auto& seg : lay->segments()) EXPECT_EQ(F.middleRows<3>(seg.error_offset).norm(), 0.0);
  EXPECT_EQ(F.middleRows<3>(lay->lc_error()).norm(), 0.0);
}

TEST(PropagateCov, IdentityWhenStatic) {
  Rng rng(43);
  const Eigen::MatrixXd P = random_spd(rng, 9, 1.0);
  const Eigen::MatrixXd out = propagate_cov(P, Eigen::MatrixXd::Zero(9, 9), Eigen::VectorXd::Zero(9), 0.01);
  EXPECT_LT((out - P).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PropagateCov, GyroNoiseFeedsAttitudeOnly) {
  const auto lay = mftest::arm_layout();
  NoiseConfig noise;
  noise.accel_noise_density = 0.0;
  noise.gyro_noise_density = 2e-3;
  noise.accel_bias_psd = 0.0;
  noise.gyro_bias_psd = 0.0;
  noise.segment_psd = 0.0;
  const int n = lay->error_dim();
  const double dt = 0.01;
  const Eigen::MatrixXd out =
      propagate_cov(Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n), *lay, noise, dt);
  Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < lay->link_count(); ++k) {
    expect.block<3, 3>(lay->link(k).dphi, lay->link(k).dphi) = Mat3::Identity() * dt * 4e-6;
  }
  EXPECT_LT((out - expect).cwiseAbs().maxCoeff(), 1e-20);
}

TEST(PropagateCov, FirstOrderAgainstVanLoan) {
  Rng rng(44);
  const int n = 8;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd F(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) F(i, j) = rng.normal();
    const Eigen::MatrixXd P = random_spd(rng, n, 1.0);
    Eigen::VectorXd qc(n);
    for (int i = 0; i < n; ++i) qc(i) = rng.uniform(0.1, 1.0);
    auto diff = [&](double dt) {
      const Eigen::MatrixXd ours = propagate_cov(P, F, qc * dt, dt);
      return (ours - van_loan(P, F, qc.asDiagonal(), dt)).cwiseAbs().maxCoeff();
    };
    const double ratio = diff(0.01) / diff(0.005);
    EXPECT_GE(ratio, 3.5);
    EXPECT_LE(ratio, 4.5);
  }
}

TEST(PropagateCov, StaysSymmetric) {
  Rng rng(45);
  const auto lay = mftest::arm_layout();
  const NavState x = rng.state(lay);
  Eigen::MatrixXd P = initial_covariance(*lay, NoiseConfig{});
  NoiseConfig noise;
  for (int i = 0; i < 200; ++i) {
    P = propagate_cov(P, assemble_F(x, random_epoch(rng, lay->link_count())), *lay, noise, 0.01);
  }
  EXPECT_EQ((P - P.transpose()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(P).info(), Eigen::Success);
}

TEST(AssembleH, MatchesCentralDifferences) {
  Rng rng(46);
  const auto lay = mftest::arm_layout();
  const int n = lay->error_dim();
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const NavState x = rng.state(lay);
    const EpochMeasurements m = all_channels(rng, *lay);
    const Eigen::MatrixXd H = assemble_H(x, m);
    Eigen::MatrixXd fd(m.dim(), n);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
      e(i) = h;
      fd.col(i) = (predict_measurements(inject_error(x, e), m) - predict_measurements(inject_error(x, -e), m)) /
                  (2 * h);
    }
    EXPECT_LT((H - fd).norm() / fd.norm(), 1e-5);
    // Rows of each channel touch only the blocks that channel depends on.
    for (size_t c = 0; c < m.channels.size(); ++c) {
      const Eigen::MatrixXd rows = H.middleRows<3>(3 * static_cast<Eigen::Index>(c));
      const Eigen::MatrixXd fd_rows = fd.middleRows<3>(3 * static_cast<Eigen::Index>(c));
      for (int col = 0; col < n; ++col) {
        if (fd_rows.col(col).norm() < 1e-9) EXPECT_EQ(rows.col(col).norm(), 0.0) << "channel " << c;
      }
    }
  }
}

TEST(JosephCorrect, ScalarTextbookCase) {
  Eigen::MatrixXd P{{1.0}};
  const Eigen::VectorXd e = joseph_correct(P, Eigen::MatrixXd{{1.0}}, Eigen::VectorXd::Constant(1, 1.0),
                                           Eigen::MatrixXd{{1.0}});
  EXPECT_NEAR(e(0), 0.5, 1e-15);
  EXPECT_NEAR(P(0, 0), 0.5, 1e-15);
}

TEST(JosephCorrect, HugeNoiseLeavesPriorUntouched) {
  Rng rng(47);
  Eigen::MatrixXd P = random_spd(rng, 6, 1.0);
  const Eigen::MatrixXd P0 = P;
  Eigen::MatrixXd H(2, 6);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 6; ++j) H(i, j) = rng.normal();
  const Eigen::VectorXd e = joseph_correct(P, H, Eigen::Vector2d(1.0, -2.0), 1e12 * Eigen::Matrix2d::Identity());
  EXPECT_LT(e.norm(), 1e-10);
  EXPECT_LT((P - P0).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(JosephCorrect, MatchesStandardFormAndShrinksTrace) {
  Rng rng(48);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd P = random_spd(rng, 7, 1.0);
    const Eigen::MatrixXd P0 = P;
    Eigen::MatrixXd H(3, 7);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 7; ++j) H(i, j) = rng.normal();
    const Eigen::MatrixXd R = random_spd(rng, 3, 0.5);
    const Eigen::VectorXd r = rng.error(3, 1.0);
    const Eigen::VectorXd e = joseph_correct(P, H, r, R);
    const Eigen::MatrixXd K = P0 * H.transpose() * (H * P0 * H.transpose() + R).inverse();
    EXPECT_LT((e - K * r).norm(), 1e-10);
    EXPECT_LT((P - (P0 - K * H * P0)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE(P.trace(), P0.trace());
    EXPECT_EQ((P - P.transpose()).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(JosephCorrect, RejectsIndefiniteInnovation) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(2, 2);
  try {
    joseph_correct(P, Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(1, 1), -Eigen::Matrix2d::Identity());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDivergence);
  }
}

TEST(EkfUpdate, ZeroResidualKeepsState) {
  Rng rng(49);
  const auto lay = mftest::arm_layout();
  EkfState s{rng.state(lay), initial_covariance(*lay, NoiseConfig{}), 0.0};
  const NavState x0 = s.x;
  const double tr0 = s.P.trace();
  const EpochMeasurements m = all_channels(rng, *lay);
  const Eigen::MatrixXd H = assemble_H(s.x, m);
  const Eigen::MatrixXd R = measurement_sigmas(m).array().square().matrix().asDiagonal();
  ekf_update(s, H, Eigen::VectorXd::Zero(m.dim()), R);
  EXPECT_LT((s.x.raw() - x0.raw()).norm(), 1e-15);
  EXPECT_LE(s.P.trace(), tr0);
}

TEST(Ekf, CameraFixPullsPositionTowardMeasurement) {
  const auto lay = mftest::arm_layout();
  NavState x(lay);
  for (int k = 0; k < lay->link_count(); ++k) x.set_q(k, UnitQuaternion::identity());
  Ekf ekf(x, initial_covariance(*lay, NoiseConfig{}), NoiseConfig{});
  EpochMeasurements m;
  m.add_camera_fix({0.0, Vec3(0.1, 0.0, 0.0), 0.05});
  ekf.correct(m);
  const double px = ekf.nav().p(0).x() + (ekf.nav().dcm(0) * ekf.nav().lc()).x();
  EXPECT_GT(px, 0.0);
  EXPECT_LT(px, 0.1);
}

TEST(NoiseConfig, TableDefaultsScaleWithRate) {
  const NoiseConfig n = NoiseConfig::table_defaults(100.0);
  EXPECT_GE(n.gravity_sigma, 0.08);
  EXPECT_NO_THROW(n.validate());
  NoiseConfig bad;
  bad.joint_pos_sigma = 0.0;
  EXPECT_THROW(bad.validate(), Error);
}
