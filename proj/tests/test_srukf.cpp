#include <cmath>
#include <vector>

#include <Eigen/Cholesky>
#include <gtest/gtest.h>

#include "mocapfuse/srukf.hpp"
#include "test_util.hpp"

using namespace mocapfuse;
using mftest::Rng;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, int r, int c, double sd = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal(sd);
  return m;
}

Eigen::MatrixXd random_spd(Rng& rng, int n, double sd) {
  const Eigen::MatrixXd a = random_matrix(rng, n, n, sd);
  return a * a.transpose() + 0.1 * sd * sd * Eigen::MatrixXd::Identity(n, n);
}

NoiseConfig silent() {
  NoiseConfig n;
  n.accel_noise_density = 0.0;
  n.gyro_noise_density = 0.0;
  n.accel_bias_psd = 0.0;
  n.gyro_bias_psd = 0.0;
  n.segment_psd = 0.0;
  return n;
}

std::vector<ImuSample> fixed_epoch(int n) {
  std::vector<ImuSample> e(n);
  for (int k = 0; k < n; ++k) {
    e[k].link = k;
    e[k].f = Vec3(1.0 + k, -0.5, -9.5);
    e[k].w = Vec3(0.2, -0.1 * k, 0.7);
  }
  return e;
}

}  // namespace

TEST(SigmaWeights, DefaultsAndSums) {
  const SigmaWeights w = SigmaWeights::make(60);
  EXPECT_EQ(w.count(), 121);
  EXPECT_DOUBLE_EQ(w.lambda, 0.0);
  EXPECT_DOUBLE_EQ(w.gamma, std::sqrt(60.0));
  EXPECT_NEAR(w.wm0 + 2 * w.L * w.wi, 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(w.wc0, 2.0);
  const SigmaWeights k = SigmaWeights::make(4, 1.0, 2.0, 2.0);
  EXPECT_NEAR(k.wm0 + 2 * k.L * k.wi, 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(k.gamma, std::sqrt(6.0));
  EXPECT_THROW(SigmaWeights::make(0), Error);
  EXPECT_THROW(SigmaWeights::make(3, 1.0, 2.0, -3.0), Error);
}

TEST(Cholupdate, MatchesRefactoredProduct) {
  Rng rng(51);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 9;
    const Eigen::MatrixXd P = random_spd(rng, n, 1.0);
    Eigen::MatrixXd S = P.llt().matrixL();
    const Eigen::VectorXd v = rng.error(n, 0.5);
    ASSERT_TRUE(cholupdate(S, v, 1.0));
    const Eigen::MatrixXd up = P + v * v.transpose();
    EXPECT_LT((S * S.transpose() - up).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((S - Eigen::MatrixXd(up.llt().matrixL())).cwiseAbs().maxCoeff(), 1e-10);
    ASSERT_TRUE(cholupdate(S, v, -1.0));
    EXPECT_LT((S * S.transpose() - P).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_TRUE(S.isLowerTriangular());
  }
}

TEST(Cholupdate, FailedDowndateReportsFalse) {
  Eigen::MatrixXd S = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_FALSE(cholupdate(S, Eigen::Vector2d(2.0, 0.0), -1.0));
}

TEST(LowerFactor, ReproducesGram) {
  Rng rng(52);
  const Eigen::MatrixXd M = random_matrix(rng, 6, 15);
  const Eigen::MatrixXd S = lower_factor(M);
  EXPECT_TRUE(S.isLowerTriangular());
  EXPECT_TRUE((S.diagonal().array() > 0.0).all());
  EXPECT_LT((S * S.transpose() - M * M.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CheckFactor, RejectsBadDiagonal) {
  Eigen::MatrixXd S = Eigen::MatrixXd::Identity(3, 3);
  EXPECT_NO_THROW(check_factor(S));
  S(1, 1) = 0.0;
  EXPECT_THROW(check_factor(S), Error);
  S(1, 1) = std::nan("");
  EXPECT_THROW(check_factor(S), Error);
}

TEST(SigmaPoints, ArmHas121Points) {
  Rng rng(53);
  const auto lay = mftest::arm_layout();
  SrukfState s{rng.state(lay), Eigen::MatrixXd(initial_covariance(*lay, NoiseConfig{}).llt().matrixL()), 0.0};
  const SigmaWeights w = SigmaWeights::make(lay->error_dim());
  EXPECT_EQ(sigma_points(s, w).size(), 121u);
}

TEST(SigmaPoints, CollapseOnTinyFactor) {
  Rng rng(54);
  const auto lay = mftest::arm_layout();
  const int n = lay->error_dim();
  SrukfState s{rng.state(lay), 1e-12 * Eigen::MatrixXd::Identity(n, n), 0.0};
  for (const auto& p : sigma_points(s, SigmaWeights::make(n))) {
    EXPECT_LT(retract_error(p, s.x).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(SigmaPoints, WeightedDeviationMeanIsZero) {
  Rng rng(55);
  const auto lay = mftest::arm_layout();
  const int n = lay->error_dim();
  const SigmaWeights w = SigmaWeights::make(n);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd S = random_spd(rng, n, 0.002).llt().matrixL();
    SrukfState s{rng.state(lay), S, 0.0};
    const auto pts = sigma_points(s, w);
    Eigen::VectorXd mean = w.wm0 * retract_error(pts[0], s.x);
    for (size_t i = 1; i < pts.size(); ++i) mean += w.wi * retract_error(pts[i], s.x);
    EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(LinearSubproblem, SrukfMatchesKalmanFilter) {
  Rng rng(56);
  const int n = 6, m = 3;
  const double dt = 0.01;
  // Constant-velocity model in three axes.
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n, n);
  F.topRightCorner(3, 3).setIdentity();
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) + F * dt;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, n);
  H.leftCols(3).setIdentity();
  H(0, 4) = 0.3;
  Eigen::VectorXd qd(n);
  qd << 1e-6, 1e-6, 1e-6, 1e-4, 1e-4, 1e-4;
  const Eigen::VectorXd r_sd = Eigen::VectorXd::Constant(m, 0.05);

  Eigen::VectorXd xk = rng.error(n, 1.0), xu = xk;
  Eigen::MatrixXd P = random_spd(rng, n, 0.3);
  Eigen::MatrixXd S = P.llt().matrixL();
  const SigmaWeights w = SigmaWeights::make(n);
  const EuclideanSpace space;
  double worst = 0.0;
  for (int step = 0; step < 100; ++step) {
    xk = A * xk;
    P = propagate_cov(P, F, qd, dt);
    ukf_time_update(space, xu, S, [&](const Eigen::VectorXd& x) { Eigen::VectorXd y = A * x; return y; }, qd, w);

    const Eigen::VectorXd z = rng.error(m, 0.5);
    xk += joseph_correct(P, H, z - H * xk, r_sd.array().square().matrix().asDiagonal());
    ASSERT_TRUE(ukf_measurement_update(space, xu, S, [&](const Eigen::VectorXd& x) { Eigen::VectorXd y = H * x; return y; },
                                       z, r_sd, w));
    worst = std::max({worst, (xk - xu).cwiseAbs().maxCoeff(),
                      (P - S * S.transpose()).cwiseAbs().maxCoeff()});
    EXPECT_TRUE((S.diagonal().array() > 0.0).all());
  }
  EXPECT_LT(worst, 1e-8);
}

TEST(LinearSubproblem, ScalarTextbookCase) {
  const SigmaWeights w = SigmaWeights::make(1);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  Eigen::MatrixXd S = Eigen::MatrixXd::Identity(1, 1);
  ASSERT_TRUE(ukf_measurement_update(EuclideanSpace{}, x, S, [](const Eigen::VectorXd& p) { return p; },
                                     Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), w));
  EXPECT_NEAR(x(0), 0.5, 1e-12);
  EXPECT_NEAR(S(0, 0) * S(0, 0), 0.5, 1e-12);
}

TEST(SrukfPropagate, TinySpreadFollowsStrapdown) {
  Rng rng(57);
  const auto lay = mftest::arm_layout();
  const int n = lay->error_dim();
  const SigmaWeights w = SigmaWeights::make(n);
  const NoiseConfig noise = silent();
  SrukfState s{rng.state(lay), 1e-9 * Eigen::MatrixXd::Identity(n, n), 0.0};
  NavState ref = s.x;
  const auto epoch = fixed_epoch(lay->link_count());
  for (int i = 0; i < 50; ++i) {
    srukf_propagate(s, epoch, noise, 0.01, w);
    propagate_nav(ref, epoch, 0.01);
  }
  EXPECT_LT(retract_error(s.x, ref).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(s.t, 0.5, 1e-12);
}

TEST(SrukfPropagate, StepHalvingIsFirstOrder) {
  Rng rng(58);
  const auto lay = mftest::arm_layout();
  const int n = lay->error_dim();
  const SigmaWeights w = SigmaWeights::make(n);
  const NoiseConfig noise = silent();
  const NavState x0 = rng.state(lay);
  const auto epoch = fixed_epoch(lay->link_count());
  auto run = [&](double dt, int steps) {
    SrukfState s{x0, 1e-9 * Eigen::MatrixXd::Identity(n, n), 0.0};
    for (int i = 0; i < steps; ++i) srukf_propagate(s, epoch, noise, dt, w);
    return s.x;
  };
  NavState ref = x0;
  for (int i = 0; i < 10000; ++i) propagate_nav(ref, epoch, 1e-4);
  const double e1 = (run(0.02, 50).p(0) - ref.p(0)).norm();
  const double e2 = (run(0.01, 100).p(0) - ref.p(0)).norm();
  EXPECT_GE(e1 / e2, 1.7);
  EXPECT_LE(e1 / e2, 2.3);
}

TEST(SrukfUpdate, ZeroResidualKeepsMean) {
  Rng rng(59);
  const auto lay = mftest::arm_layout();
  const int n = lay->error_dim();
  const NavState truth = rng.state(lay);
  SrukfState s{truth, Eigen::MatrixXd(initial_covariance(*lay, NoiseConfig{}).llt().matrixL()), 0.0};
  const SigmaWeights w = SigmaWeights::make(n);
  // The unscented residual is taken against the sigma-point mean of h, not h(x).
  const auto pts = sigma_points(s, w);
  Vec3 zbar = w.wm0 * camera_pos_predicted(pts[0]);
  for (size_t i = 1; i < pts.size(); ++i) zbar += w.wi * camera_pos_predicted(pts[i]);
  EpochMeasurements m;
  m.add_camera_fix({0.0, zbar, 0.05});
  const double tr0 = (s.S * s.S.transpose()).trace();
  SrukfStats stats;
  srukf_update(s, m, w, &stats);
  EXPECT_LT(retract_error(s.x, truth).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((s.S * s.S.transpose()).trace(), tr0);
  EXPECT_EQ(stats.updates, 1);
  EXPECT_EQ(stats.rejected_channels, 0);
}

TEST(Srukf, FactorStaysPositiveOverArmRun) {
  Rng rng(60);
  const auto lay = mftest::arm_layout();
  NavState x = rng.state(lay);
  Srukf f(x, initial_covariance(*lay, NoiseConfig{}), NoiseConfig{});
  const auto epoch = fixed_epoch(lay->link_count());
  for (int i = 0; i < 60; ++i) {
    f.propagate(epoch, 0.01);
    EpochMeasurements m;
    for (int k = 0; k < lay->link_count(); ++k) {
      m.f_raw.push_back(epoch[k].f);
      m.w_raw.push_back(epoch[k].w);
    }
    for (int j = 0; j < lay->joint_count(); ++j) {
      m.add_joint({j, JointKind::kPosition, 0.01});
      m.add_joint({j, JointKind::kVelocity, 0.01});
    }
    if (i % 3 == 0) m.add_camera_fix({0.0, Vec3::Zero(), 0.05});
    f.correct(m);
    ASSERT_TRUE((f.sqrt_covariance().diagonal().array() > 0.0).all());
    ASSERT_EQ(Eigen::LLT<Eigen::MatrixXd>(f.covariance()).info(), Eigen::Success);
  }
  EXPECT_LE(f.stats().mean_iterations_max, kChartMeanMaxIterations);
}
