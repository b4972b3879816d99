#include "mocapfuse/srukf.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace mocapfuse {

SigmaWeights SigmaWeights::make(int L, double alpha, double beta, double kappa) {
  if (L <= 0) throw invalid_argument("sigma weights need a positive dimension");
  if (!(alpha > 0.0)) throw invalid_argument("alpha must be positive");
  SigmaWeights w;
  w.alpha = alpha;
  w.beta = beta;
  w.kappa = kappa;
  w.L = L;
  w.lambda = alpha * alpha * (L + kappa) - L;
  const double spread = L + w.lambda;
  if (!(spread > 0.0)) throw invalid_argument("L + lambda must be positive");
  w.gamma = std::sqrt(spread);
  w.wm0 = w.lambda / spread;
  w.wc0 = w.wm0 + (1.0 - alpha * alpha + beta);
  w.wi = 1.0 / (2.0 * spread);
  return w;
}

bool cholupdate(Eigen::MatrixXd& S, Eigen::VectorXd v, double sign) {
  const Eigen::Index n = S.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double skk = S(k, k);
    const double r2 = skk * skk + sign * v(k) * v(k);
    if (!(r2 > 0.0) || !(skk > 0.0)) return false;
    const double r = std::sqrt(r2);
    const double c = r / skk;
    const double s = v(k) / skk;
    S(k, k) = r;
    if (k + 1 < n) {
      const Eigen::Index rest = n - k - 1;
      S.col(k).tail(rest) = (S.col(k).tail(rest) + sign * s * v.tail(rest)) / c;
      v.tail(rest) = c * v.tail(rest) - s * S.col(k).tail(rest);
    }
  }
  return true;
}

Eigen::MatrixXd lower_factor(const Eigen::MatrixXd& M) {
  const Eigen::Index n = M.rows();
  if (M.cols() < n) throw invalid_argument("lower_factor needs at least as many columns as rows");
  if (!M.allFinite()) throw Error(ErrorCode::kDivergence, "non-finite entries in square-root factor");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(M.transpose());
  Eigen::MatrixXd R = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  Eigen::MatrixXd S = R.transpose();
  for (Eigen::Index k = 0; k < n; ++k) {
    if (S(k, k) < 0.0) S.col(k) = -S.col(k);
  }
  return S;
}

void check_factor(const Eigen::MatrixXd& S) {
  if (!S.allFinite()) throw Error(ErrorCode::kDivergence, "square-root factor is not finite");
  if ((S.diagonal().array() <= 0.0).any()) {
    throw Error(ErrorCode::kDivergence, "square-root factor has a nonpositive diagonal");
  }
}

std::vector<NavState> sigma_points(const SrukfState& state, const SigmaWeights& w) {
  return sigma_points(NavSpace{}, state.x, state.S, w);
}

void srukf_propagate(SrukfState& state, std::span<const ImuSample> epoch, const NoiseConfig& noise,
                     double dt, const SigmaWeights& w, SrukfStats* stats) {
  if (!(dt > 0.0)) throw invalid_argument("propagation step must be positive");
  const Eigen::VectorXd qd = process_noise_diag(state.x.layout(), noise, dt);
  auto f = [&](const NavState& p) {
    NavState y = p;
    propagate_nav(y, epoch, dt);
    return y;
  };
  ukf_time_update(NavSpace{}, state.x, state.S, f, qd, w, stats);
  state.t += dt;
}

namespace {

EpochMeasurements single_channel(const EpochMeasurements& m, size_t i) {
  EpochMeasurements one;
  one.f_raw = m.f_raw;
  one.w_raw = m.w_raw;
  one.fixes = m.fixes;
  one.channels = {m.channels[i]};
  return one;
}

bool apply_channels(SrukfState& state, const EpochMeasurements& m, const SigmaWeights& w) {
  const Eigen::VectorXd z = observed_measurements(state.x, m);
  const Eigen::VectorXd sd = measurement_sigmas(m);
  auto h = [&](const NavState& p) { return predict_measurements(p, m); };
  return ukf_measurement_update(NavSpace{}, state.x, state.S, h, z, sd, w);
}

}  // namespace

void srukf_update(SrukfState& state, const EpochMeasurements& m, const SigmaWeights& w,
                  SrukfStats* stats) {
  if (m.empty()) return;
  if (stats) ++stats->updates;
  if (apply_channels(state, m, w)) return;
  for (size_t i = 0; i < m.channels.size(); ++i) {
    if (!apply_channels(state, single_channel(m, i), w) && stats) ++stats->rejected_channels;
  }
}

Srukf::Srukf(NavState x0, const Eigen::MatrixXd& P0, NoiseConfig noise, double kappa)
    : state_{std::move(x0), Eigen::MatrixXd(), 0.0}, noise_(noise) {
  noise_.validate();
  const int n = state_.x.layout().error_dim();
  if (P0.rows() != n || P0.cols() != n) throw invalid_argument("initial covariance has the wrong size");
  Eigen::LLT<Eigen::MatrixXd> llt(P0);
  if (llt.info() != Eigen::Success) throw invalid_argument("initial covariance is not positive definite");
  state_.S = llt.matrixL();
  weights_ = SigmaWeights::make(n, 1.0, 2.0, kappa);
}

void Srukf::propagate(std::span<const ImuSample> epoch, double dt) {
  srukf_propagate(state_, epoch, noise_, dt, weights_, &stats_);
}

void Srukf::correct(const EpochMeasurements& m) { srukf_update(state_, m, weights_, &stats_); }

}  // namespace mocapfuse
