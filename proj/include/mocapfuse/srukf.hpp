#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>

#include "mocapfuse/body_model.hpp"
#include "mocapfuse/ekf.hpp"
#include "mocapfuse/error.hpp"
#include "mocapfuse/ins.hpp"
#include "mocapfuse/measurements.hpp"

namespace mocapfuse {

/// Scaled unscented weights for 2L+1 points.
struct SigmaWeights {
  double alpha = 1.0;
  double beta = 2.0;
  double kappa = 0.0;
  int L = 0;
  double lambda = 0.0;
  double gamma = 0.0;
  double wm0 = 0.0;
  double wc0 = 0.0;
  double wi = 0.0;  // mean and covariance weight of every non-center point

  static SigmaWeights make(int L, double alpha = 1.0, double beta = 2.0, double kappa = 0.0);
  int count() const { return 2 * L + 1; }
};

/// Rank-1 update (sign > 0) or downdate (sign < 0) of a lower-triangular factor:
/// S S^T <- S S^T + sign * v v^T. Returns false when a downdate would lose
/// positive definiteness; S is then left in an unspecified state.
bool cholupdate(Eigen::MatrixXd& S, Eigen::VectorXd v, double sign);

/// Lower-triangular S with positive diagonal and S S^T = M M^T, via QR of M^T.
/// M must have at least as many columns as rows.
Eigen::MatrixXd lower_factor(const Eigen::MatrixXd& M);

/// Throws Error(kDivergence) unless S is finite with a strictly positive diagonal.
void check_factor(const Eigen::MatrixXd& S);

/// Counters gathered across steps.
struct SrukfStats {
  long mean_iterations_max = 0;
  long mean_nonconverged = 0;
  long rejected_channels = 0;
  long updates = 0;
};

inline constexpr int kChartMeanMaxIterations = 5;
inline constexpr double kChartMeanTolerance = 1e-12;

// Generic square-root unscented steps over a chart space. A Space provides
//   using Point; Point plus(const Point&, const Eigen::VectorXd&) const;
//   Eigen::VectorXd minus(const Point& a, const Point& ref) const;
// with minus(plus(x, e), x) == e.

template <class Space>
std::vector<typename Space::Point> sigma_points(const Space& space, const typename Space::Point& x,
                                                const Eigen::MatrixXd& S, const SigmaWeights& w) {
  check_factor(S);
  std::vector<typename Space::Point> pts;
  pts.reserve(w.count());
  pts.push_back(x);
  for (int i = 0; i < w.L; ++i) pts.push_back(space.plus(x, w.gamma * S.col(i)));
  for (int i = 0; i < w.L; ++i) pts.push_back(space.plus(x, -w.gamma * S.col(i)));
  return pts;
}

/// Iterated weighted mean on the chart, started at `start`.
template <class Space>
typename Space::Point chart_mean(const Space& space, const std::vector<typename Space::Point>& pts,
                                 const SigmaWeights& w, typename Space::Point start,
                                 SrukfStats* stats = nullptr) {
  int it = 0;
  bool converged = false;
  while (it < kChartMeanMaxIterations) {
    ++it;
    Eigen::VectorXd shift = w.wm0 * space.minus(pts[0], start);
    for (size_t i = 1; i < pts.size(); ++i) shift += w.wi * space.minus(pts[i], start);
    start = space.plus(start, shift);
    if (shift.norm() < kChartMeanTolerance) {
      converged = true;
      break;
    }
  }
  if (stats) {
    stats->mean_iterations_max = std::max<long>(stats->mean_iterations_max, it);
    if (!converged) ++stats->mean_nonconverged;
  }
  return start;
}

/// Time update: propagate every sigma point through f, re-average, refactor with
/// sqrt(Q_d) appended and fold the center point in with a rank-1 update.
template <class Space, class F>
void ukf_time_update(const Space& space, typename Space::Point& x, Eigen::MatrixXd& S, F&& f,
                     const Eigen::VectorXd& qd_diag, const SigmaWeights& w,
                     SrukfStats* stats = nullptr) {
  using Point = typename Space::Point;
  const auto pts = sigma_points(space, x, S, w);
  std::vector<Point> prop;
  prop.reserve(pts.size());
  for (const auto& p : pts) prop.push_back(f(p));
  Point mean = chart_mean(space, prop, w, prop[0], stats);

  const int L = w.L;
  Eigen::MatrixXd M(L, 2 * L + L);
  const double sw = std::sqrt(w.wi);
  for (int i = 1; i <= 2 * L; ++i) M.col(i - 1) = sw * space.minus(prop[i], mean);
  M.rightCols(L) = qd_diag.cwiseMax(0.0).cwiseSqrt().asDiagonal();
  Eigen::MatrixXd Snew = lower_factor(M);
  const Eigen::VectorXd d0 = space.minus(prop[0], mean);
  if (w.wc0 != 0.0 && !cholupdate(Snew, std::sqrt(std::abs(w.wc0)) * d0, w.wc0 > 0 ? 1.0 : -1.0)) {
    throw Error(ErrorCode::kDivergence, "center-point downdate failed in time update");
  }
  check_factor(Snew);
  x = std::move(mean);
  S = std::move(Snew);
}

/// Measurement update with a Euclidean measurement h(Point) -> R^m, observed z
/// and per-row noise SDs. Returns false (x and S untouched) if a downdate fails.
template <class Space, class H>
bool ukf_measurement_update(const Space& space, typename Space::Point& x, Eigen::MatrixXd& S,
                            H&& h, const Eigen::VectorXd& z, const Eigen::VectorXd& r_sd,
                            const SigmaWeights& w) {
  const int L = w.L;
  const int m = static_cast<int>(z.size());
  const auto pts = sigma_points(space, x, S, w);
  Eigen::MatrixXd Z(m, w.count());
  for (int i = 0; i < w.count(); ++i) Z.col(i) = h(pts[i]);
  Eigen::VectorXd zbar = w.wm0 * Z.col(0);
  for (int i = 1; i < w.count(); ++i) zbar += w.wi * Z.col(i);

  const double sw = std::sqrt(w.wi);
  Eigen::MatrixXd M(m, 2 * L + m);
  for (int i = 1; i < w.count(); ++i) M.col(i - 1) = sw * (Z.col(i) - zbar);
  M.rightCols(m) = r_sd.asDiagonal();
  Eigen::MatrixXd Sy = lower_factor(M);
  if (w.wc0 != 0.0 &&
      !cholupdate(Sy, std::sqrt(std::abs(w.wc0)) * (Z.col(0) - zbar), w.wc0 > 0 ? 1.0 : -1.0)) {
    return false;
  }

  // Sigma deviations from the center are exactly +-gamma S columns.
  Eigen::MatrixXd Pxy = Eigen::MatrixXd::Zero(L, m);
  for (int i = 0; i < L; ++i) {
    Pxy.noalias() += (w.wi * w.gamma) * S.col(i) * (Z.col(1 + i) - Z.col(1 + L + i)).transpose();
  }
  // K = Pxy (Sy Sy^T)^-1 by two triangular solves.
  Eigen::MatrixXd Kt = Sy.triangularView<Eigen::Lower>().solve(Pxy.transpose());
  Sy.transpose().triangularView<Eigen::Upper>().solveInPlace(Kt);
  const Eigen::MatrixXd K = Kt.transpose();
  const Eigen::MatrixXd U = K * Sy;

  Eigen::MatrixXd Snew = S;
  for (int j = 0; j < m; ++j) {
    if (!cholupdate(Snew, U.col(j), -1.0)) return false;
  }
  if (!Snew.allFinite() || (Snew.diagonal().array() <= 0.0).any()) return false;
  x = space.plus(x, K * (z - zbar));
  S = std::move(Snew);
  return true;
}

/// Euclidean chart, used for linear reference problems.
struct EuclideanSpace {
  using Point = Eigen::VectorXd;
  Point plus(const Point& x, const Eigen::VectorXd& e) const { return x + e; }
  Eigen::VectorXd minus(const Point& a, const Point& ref) const { return a - ref; }
};

/// Augmented arm state on the inject/retract chart.
struct NavSpace {
  using Point = NavState;
  Point plus(const Point& x, const Eigen::VectorXd& e) const { return inject_error(x, e); }
  Eigen::VectorXd minus(const Point& a, const Point& ref) const { return retract_error(a, ref); }
};

struct SrukfState {
  NavState x;
  Eigen::MatrixXd S;  // lower triangular, S S^T = P
  double t = 0.0;
};

std::vector<NavState> sigma_points(const SrukfState& state, const SigmaWeights& w);

void srukf_propagate(SrukfState& state, std::span<const ImuSample> epoch, const NoiseConfig& noise,
                     double dt, const SigmaWeights& w, SrukfStats* stats = nullptr);

/// Stacked update; if a downdate fails the channels are retried one at a time
/// and any channel that still fails is skipped and counted.
void srukf_update(SrukfState& state, const EpochMeasurements& m, const SigmaWeights& w,
                  SrukfStats* stats = nullptr);

class Srukf {
 public:
  Srukf(NavState x0, const Eigen::MatrixXd& P0, NoiseConfig noise, double kappa = 0.0);

  void propagate(std::span<const ImuSample> epoch, double dt);
  void correct(const EpochMeasurements& m);

  const SrukfState& state() const { return state_; }
  const NavState& nav() const { return state_.x; }
  const Eigen::MatrixXd& sqrt_covariance() const { return state_.S; }
  Eigen::MatrixXd covariance() const { return state_.S * state_.S.transpose(); }
  const SigmaWeights& weights() const { return weights_; }
  const SrukfStats& stats() const { return stats_; }

 private:
  SrukfState state_;
  NoiseConfig noise_;
  SigmaWeights weights_;
  SrukfStats stats_;
};

}  // namespace mocapfuse
