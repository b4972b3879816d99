#include "mocapfuse/ekf.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "mocapfuse/config.hpp"
#include "mocapfuse/error.hpp"

namespace mocapfuse {

namespace {

constexpr double kStandardGravity = 9.80665;
constexpr double kDegToRad = 0.017453292519943295;
constexpr double kBiasCorrelationTime = 100.0;  // s

}  // namespace

NoiseConfig NoiseConfig::table_defaults(double imu_rate_hz) {
  // Datasheet random walk per sqrt(hour) -> per sqrt(second): divide by 60.
  // Bias instability enters as a first-order drift; PSD = 2 sigma^2 / tau.
  NoiseConfig n;
  n.accel_noise_density = 60e-6 * kStandardGravity / 60.0;
  n.gyro_noise_density = 0.01 * kDegToRad / 60.0;
  const double accel_instability = 15e-6 * kStandardGravity;
  const double gyro_instability = 10.0 * kDegToRad / 3600.0;
  n.accel_bias_psd = 2.0 * accel_instability * accel_instability / kBiasCorrelationTime;
  n.gyro_bias_psd = 2.0 * gyro_instability * gyro_instability / kBiasCorrelationTime;
  // A window passes the stationarity test with up to 0.08 m/s^2 of residual
  // acceleration, which dwarfs sensor noise; sigma covers that band.
  n.gravity_sigma = std::max(0.08, n.accel_noise_density * std::sqrt(imu_rate_hz));
  return n;
}

void NoiseConfig::validate() const {
  const double values[] = {accel_noise_density, gyro_noise_density, accel_bias_psd, gyro_bias_psd,
                           segment_psd, init_pos, init_vel, init_att, init_gyro_bias,
                           init_accel_bias, init_segment, init_lever_arm};
  for (double v : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw invalid_argument("noise settings must be >= 0");
  }
  if (!(joint_pos_sigma > 0.0) || !(joint_vel_sigma > 0.0) || !(gravity_sigma > 0.0)) {
    throw invalid_argument("measurement SDs must be positive");
  }
}

void NoiseConfig::apply(const KeyValueConfig& cfg) {
  accel_noise_density = cfg.get_double("accel_noise_density", accel_noise_density);
  gyro_noise_density = cfg.get_double("gyro_noise_density", gyro_noise_density);
  accel_bias_psd = cfg.get_double("accel_bias_psd", accel_bias_psd);
  gyro_bias_psd = cfg.get_double("gyro_bias_psd", gyro_bias_psd);
  segment_psd = cfg.get_double("segment_psd", segment_psd);
  joint_pos_sigma = cfg.get_double("joint_pos_sigma", joint_pos_sigma);
  joint_vel_sigma = cfg.get_double("joint_vel_sigma", joint_vel_sigma);
  gravity_sigma = cfg.get_double("gravity_sigma", gravity_sigma);
  init_pos = cfg.get_double("init_pos_sd", init_pos);
  init_vel = cfg.get_double("init_vel_sd", init_vel);
  init_att = cfg.get_double("init_att_sd", init_att);
  init_gyro_bias = cfg.get_double("init_gyro_bias_sd", init_gyro_bias);
  init_accel_bias = cfg.get_double("init_accel_bias_sd", init_accel_bias);
  init_segment = cfg.get_double("init_segment_sd", init_segment);
  init_lever_arm = cfg.get_double("init_lever_arm_sd", init_lever_arm);
  validate();
}

std::string NoiseConfig::to_config_text() const {
  std::ostringstream os;
  os << "accel_noise_density = " << format_double(accel_noise_density) << "\n"
     << "gyro_noise_density = " << format_double(gyro_noise_density) << "\n"
     << "accel_bias_psd = " << format_double(accel_bias_psd) << "\n"
     << "gyro_bias_psd = " << format_double(gyro_bias_psd) << "\n"
     << "segment_psd = " << format_double(segment_psd) << "\n"
     << "joint_pos_sigma = " << format_double(joint_pos_sigma) << "\n"
     << "joint_vel_sigma = " << format_double(joint_vel_sigma) << "\n"
     << "gravity_sigma = " << format_double(gravity_sigma) << "\n"
     << "init_pos_sd = " << format_double(init_pos) << "\n"
     << "init_vel_sd = " << format_double(init_vel) << "\n"
     << "init_att_sd = " << format_double(init_att) << "\n"
     << "init_gyro_bias_sd = " << format_double(init_gyro_bias) << "\n"
     << "init_accel_bias_sd = " << format_double(init_accel_bias) << "\n"
     << "init_segment_sd = " << format_double(init_segment) << "\n"
     << "init_lever_arm_sd = " << format_double(init_lever_arm) << "\n";
  return os.str();
}

Eigen::MatrixXd initial_covariance(const StateLayout& layout, const NoiseConfig& noise) {
  Eigen::VectorXd sd(layout.error_dim());
  for (int k = 0; k < layout.link_count(); ++k) {
    const LinkSlots& s = layout.link(k);
    sd.segment<3>(s.dp).setConstant(noise.init_pos);
    sd.segment<3>(s.dv).setConstant(noise.init_vel);
    sd.segment<3>(s.dphi).setConstant(noise.init_att);
    sd.segment<3>(s.dba).setConstant(noise.init_accel_bias);
    sd.segment<3>(s.dbg).setConstant(noise.init_gyro_bias);
  }
  for (const auto& seg : layout.segments()) sd.segment<3>(seg.error_offset).setConstant(noise.init_segment);
  sd.segment<3>(layout.lc_error()).setConstant(noise.init_lever_arm);
  return sd.array().square().matrix().asDiagonal();
}

Eigen::MatrixXd assemble_F(const NavState& x, std::span<const ImuSample> epoch) {
  const StateLayout& lay = x.layout();
  if (static_cast<int>(epoch.size()) != lay.link_count()) {
    throw invalid_argument("assemble_F needs one IMU sample per link");
  }
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(lay.error_dim(), lay.error_dim());
  for (int k = 0; k < lay.link_count(); ++k) {
    const LinkSlots& s = lay.link(k);
    const Dcm r = x.dcm(k);
    const Vec3 f_nav = r * (epoch[k].f - x.ba(k));
    F.block<3, 3>(s.dp, s.dv) = Mat3::Identity();
    F.block<3, 3>(s.dv, s.dphi) = -skew(f_nav);
    F.block<3, 3>(s.dv, s.dba) = -r;
    F.block<3, 3>(s.dphi, s.dbg) = -r;
  }
  return F;
}

Eigen::VectorXd process_noise_diag(const StateLayout& layout, const NoiseConfig& noise, double dt) {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(layout.error_dim());
  const double qa = noise.accel_noise_density * noise.accel_noise_density;
  const double qg = noise.gyro_noise_density * noise.gyro_noise_density;
  for (int k = 0; k < layout.link_count(); ++k) {
    const LinkSlots& s = layout.link(k);
    q.segment<3>(s.dv).setConstant(qa * dt);
    q.segment<3>(s.dphi).setConstant(qg * dt);
    q.segment<3>(s.dba).setConstant(noise.accel_bias_psd * dt);
    q.segment<3>(s.dbg).setConstant(noise.gyro_bias_psd * dt);
  }
  for (const auto& seg : layout.segments()) {
    q.segment<3>(seg.error_offset).setConstant(noise.segment_psd * dt);
  }
  q.segment<3>(layout.lc_error()).setConstant(noise.segment_psd * dt);
  return q;
}

Eigen::MatrixXd propagate_cov(const Eigen::MatrixXd& P, const Eigen::MatrixXd& F,
                              const Eigen::VectorXd& qd_diag, double dt) {
  if (!(dt > 0.0)) throw invalid_argument("covariance step must be positive");
  const Eigen::Index n = P.rows();
  Eigen::MatrixXd phi = F * dt;
  phi.diagonal().array() += 1.0;
  Eigen::MatrixXd tmp;
  tmp.noalias() = phi * P;
  Eigen::MatrixXd out(n, n);
  out.noalias() = tmp * phi.transpose();
  out.diagonal() += qd_diag;
  return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd propagate_cov(const Eigen::MatrixXd& P, const Eigen::MatrixXd& F,
                              const StateLayout& layout, const NoiseConfig& noise, double dt) {
  return propagate_cov(P, F, process_noise_diag(layout, noise, dt), dt);
}

Eigen::MatrixXd assemble_H(const Channel& ch, const NavState& x, const EpochMeasurements& m) {
  const StateLayout& lay = x.layout();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(3, lay.error_dim());
  switch (ch.kind) {
    case ChannelKind::kJointPosition: {
      const JointSpec& j = lay.model().joints.at(ch.index);
      const SegmentSlot& sa = lay.segment(ch.index, j.a);
      const SegmentSlot& sb = lay.segment(ch.index, j.b);
      const Dcm ra = x.dcm(j.a), rb = x.dcm(j.b);
      const Vec3 la = x.segment(ch.index, j.a), lb = x.segment(ch.index, j.b);
      H.block<3, 3>(0, lay.link(j.b).dp) = Mat3::Identity();
      H.block<3, 3>(0, lay.link(j.a).dp) = -Mat3::Identity();
      H.block<3, 3>(0, lay.link(j.b).dphi) = -skew(rb * lb);
      H.block<3, 3>(0, lay.link(j.a).dphi) = skew(ra * la);
      H.block<3, 3>(0, sb.error_offset) = rb;
      H.block<3, 3>(0, sa.error_offset) = -ra;
      break;
    }
    case ChannelKind::kJointVelocity: {
      const JointSpec& j = lay.model().joints.at(ch.index);
      if (static_cast<int>(m.w_raw.size()) <= std::max(j.a, j.b)) {
        throw invalid_argument("joint velocity channel is missing a link rate");
      }
      const SegmentSlot& sa = lay.segment(ch.index, j.a);
      const SegmentSlot& sb = lay.segment(ch.index, j.b);
      const Dcm ra = x.dcm(j.a), rb = x.dcm(j.b);
      const Vec3 la = x.segment(ch.index, j.a), lb = x.segment(ch.index, j.b);
      const Vec3 wa = m.w_raw[j.a] - x.bg(j.a), wb = m.w_raw[j.b] - x.bg(j.b);
      const Vec3 ua = ra * wa.cross(la), ub = rb * wb.cross(lb);
      H.block<3, 3>(0, lay.link(j.b).dv) = Mat3::Identity();
      H.block<3, 3>(0, lay.link(j.a).dv) = -Mat3::Identity();
      H.block<3, 3>(0, lay.link(j.b).dphi) = -skew(ub);
      H.block<3, 3>(0, lay.link(j.a).dphi) = skew(ua);
      H.block<3, 3>(0, lay.link(j.b).dbg) = rb * skew(lb);
      H.block<3, 3>(0, lay.link(j.a).dbg) = -ra * skew(la);
      H.block<3, 3>(0, sb.error_offset) = rb * skew(wb);
      H.block<3, 3>(0, sa.error_offset) = -ra * skew(wa);
      break;
    }
    case ChannelKind::kGravity: {
      const int k = ch.index;
      if (static_cast<int>(m.f_raw.size()) <= k) {
        throw invalid_argument("gravity channel is missing the link specific force");
      }
      const Dcm r = x.dcm(k);
      const Vec3 g_hat = -(r * (m.f_raw[k] - x.ba(k)));
      // -g x phi, with the predicted gravity in place of g_n.
      H.block<3, 3>(0, lay.link(k).dphi) = -skew(g_hat);
      H.block<3, 3>(0, lay.link(k).dba) = r;
      break;
    }
    case ChannelKind::kCameraPosition: {
      const int c = lay.model().camera_link;
      const Dcm r = x.dcm(c);
      H.block<3, 3>(0, lay.link(c).dp) = Mat3::Identity();
      H.block<3, 3>(0, lay.link(c).dphi) = -skew(r * x.lc());
      H.block<3, 3>(0, lay.lc_error()) = r;
      break;
    }
  }
  return H;
}

Eigen::MatrixXd assemble_H(const NavState& x, const EpochMeasurements& m) {
  Eigen::MatrixXd H(m.dim(), x.layout().error_dim());
  for (size_t i = 0; i < m.channels.size(); ++i) {
    H.middleRows<3>(3 * static_cast<Eigen::Index>(i)) = assemble_H(m.channels[i], x, m);
  }
  return H;
}

Eigen::VectorXd joseph_correct(Eigen::MatrixXd& P, const Eigen::MatrixXd& H,
                               const Eigen::VectorXd& resid, const Eigen::MatrixXd& R) {
  if (H.cols() != P.rows() || H.rows() != resid.size() || R.rows() != resid.size()) {
    throw invalid_argument("kalman update dimension mismatch");
  }
  const Eigen::MatrixXd pht = P * H.transpose();
  Eigen::MatrixXd s = H * pht;
  s += R;
  const Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (s + s.transpose()));
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kDivergence, "innovation covariance is not positive definite");
  }
  const Eigen::MatrixXd K = llt.solve(pht.transpose()).transpose();
  const Eigen::VectorXd e = K * resid;
  Eigen::MatrixXd a = -K * H;
  a.diagonal().array() += 1.0;
  Eigen::MatrixXd ap;
  ap.noalias() = a * P;
  Eigen::MatrixXd next;
  next.noalias() = ap * a.transpose();
  next.noalias() += K * R * K.transpose();
  P = 0.5 * (next + next.transpose());
  return e;
}

void ekf_update(EkfState& state, const Eigen::MatrixXd& H, const Eigen::VectorXd& resid,
                const Eigen::MatrixXd& R) {
  const Eigen::VectorXd e = joseph_correct(state.P, H, resid, R);
  state.x = inject_error(state.x, e);
}

Ekf::Ekf(NavState x0, Eigen::MatrixXd P0, NoiseConfig noise)
    : state_{std::move(x0), std::move(P0), 0.0}, noise_(noise) {
  noise_.validate();
  const int n = state_.x.layout().error_dim();
  if (state_.P.rows() != n || state_.P.cols() != n) {
    throw invalid_argument("initial covariance has the wrong size");
  }
}

void Ekf::propagate(std::span<const ImuSample> epoch, double dt) {
  const Eigen::MatrixXd F = assemble_F(state_.x, epoch);
  propagate_nav(state_.x, epoch, dt);
  state_.P = propagate_cov(state_.P, F, state_.x.layout(), noise_, dt);
  state_.t += dt;
}

void Ekf::correct(const EpochMeasurements& m) {
  if (m.empty()) return;
  const Eigen::VectorXd resid = observed_measurements(state_.x, m) - predict_measurements(state_.x, m);
  const Eigen::MatrixXd H = assemble_H(state_.x, m);
  const Eigen::VectorXd sig = measurement_sigmas(m);
  const Eigen::MatrixXd R = sig.array().square().matrix().asDiagonal();
  ekf_update(state_, H, resid, R);
}

}  // namespace mocapfuse
