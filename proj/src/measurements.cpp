#include "mocapfuse/measurements.hpp"

#include <algorithm>
#include <cmath>

#include "mocapfuse/error.hpp"

namespace mocapfuse {

namespace {

const JointSpec& joint_at(const NavState& x, int joint) {
  const auto& joints = x.layout().model().joints;
  if (joint < 0 || joint >= static_cast<int>(joints.size())) {
    throw invalid_argument("unknown joint " + std::to_string(joint));
  }
  return joints[joint];
}

}  // namespace

Vec3 joint_pos_predicted(const NavState& x, int joint) {
  const JointSpec& j = joint_at(x, joint);
  return x.p(j.b) - x.p(j.a) + x.dcm(j.b) * x.segment(joint, j.b) -
         x.dcm(j.a) * x.segment(joint, j.a);
}

Vec3 joint_vel_predicted(const NavState& x, int joint, const Vec3& w_hat_a, const Vec3& w_hat_b) {
  const JointSpec& j = joint_at(x, joint);
  if (!w_hat_a.allFinite() || !w_hat_b.allFinite()) {
    throw invalid_argument("joint velocity needs finite rates for both links");
  }
  return x.v(j.b) - x.v(j.a) + x.dcm(j.b) * w_hat_b.cross(x.segment(joint, j.b)) -
         x.dcm(j.a) * w_hat_a.cross(x.segment(joint, j.a));
}

Vec3 camera_pos_predicted(const NavState& x) {
  const int c = x.layout().model().camera_link;
  return x.p(c) + x.dcm(c) * x.lc();
}

Vec3 gravity_predicted(const NavState& x, int link, const Vec3& f_hat) {
  return -(x.dcm(link) * f_hat);
}

StationaryFlag detect_stationary(std::span<const ImuSample> window, double gravity_norm,
                                 const StationaryThresholds& th) {
  if (window.size() < 2 || window.back().t - window.front().t < th.min_window - 1e-9) {
    throw invalid_argument("stationarity window shorter than " + std::to_string(th.min_window) +
                           " s");
  }
  StationaryFlag flag;
  flag.link = window.front().link;
  flag.t0 = window.front().t;
  flag.t1 = window.back().t;
  const double n = static_cast<double>(window.size());
  double sw = 0, sw2 = 0, sf = 0, sf2 = 0;
  for (const auto& s : window) {
    const double wn = s.w.norm();
    const double fn = s.f.norm();
    sw += wn;
    sw2 += wn * wn;
    sf += fn;
    sf2 += fn * fn;
  }
  const double mw = sw / n, mf = sf / n;
  const double sd_w = std::sqrt(std::max(0.0, sw2 / n - mw * mw));
  const double sd_f = std::sqrt(std::max(0.0, sf2 / n - mf * mf));
  flag.is_stationary =
      sd_w < th.gyro && std::abs(mf - gravity_norm) < th.accel && sd_f < th.accel;
  return flag;
}

void EpochMeasurements::add_joint(const JointObservation& obs) {
  if (!(obs.sigma > 0.0)) throw invalid_argument("joint observation sigma must be positive");
  channels.push_back({obs.kind == JointKind::kPosition ? ChannelKind::kJointPosition
                                                       : ChannelKind::kJointVelocity,
                      obs.joint, obs.sigma});
}

void EpochMeasurements::add_gravity(const StationaryFlag& flag, double sigma) {
  if (!flag.is_stationary) {
    throw invalid_argument("gravity referencing requested for a moving link");
  }
  if (!(sigma > 0.0)) throw invalid_argument("gravity sigma must be positive");
  channels.push_back({ChannelKind::kGravity, flag.link, sigma});
}

void EpochMeasurements::add_camera_fix(const PositionFix& fix) {
  if (!(fix.sigma > 0.0)) throw invalid_argument("position fix sigma must be positive");
  fixes.push_back(fix);
  channels.push_back({ChannelKind::kCameraPosition, static_cast<int>(fixes.size()) - 1, fix.sigma});
}

Eigen::VectorXd predict_measurements(const NavState& x, const EpochMeasurements& m) {
  Eigen::VectorXd y(m.dim());
  int row = 0;
  for (const auto& ch : m.channels) {
    switch (ch.kind) {
      case ChannelKind::kJointPosition:
        y.segment<3>(row) = joint_pos_predicted(x, ch.index);
        break;
      case ChannelKind::kJointVelocity: {
        const JointSpec& j = joint_at(x, ch.index);
        if (static_cast<int>(m.w_raw.size()) <= std::max(j.a, j.b)) {
          throw invalid_argument("joint velocity channel is missing a link rate");
        }
        y.segment<3>(row) = joint_vel_predicted(x, ch.index, m.w_raw[j.a] - x.bg(j.a),
                                                m.w_raw[j.b] - x.bg(j.b));
        break;
      }
      case ChannelKind::kGravity:
        if (static_cast<int>(m.f_raw.size()) <= ch.index) {
          throw invalid_argument("gravity channel is missing the link specific force");
        }
        y.segment<3>(row) = gravity_predicted(x, ch.index, m.f_raw[ch.index] - x.ba(ch.index));
        break;
      case ChannelKind::kCameraPosition:
        y.segment<3>(row) = camera_pos_predicted(x);
        break;
    }
    row += 3;
  }
  return y;
}

Eigen::VectorXd observed_measurements(const NavState& x, const EpochMeasurements& m) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m.dim());
  int row = 0;
  for (const auto& ch : m.channels) {
    if (ch.kind == ChannelKind::kGravity) {
      z.segment<3>(row) = x.layout().model().gravity_n;
    } else if (ch.kind == ChannelKind::kCameraPosition) {
      z.segment<3>(row) = m.fixes.at(ch.index).p;
    }
    row += 3;
  }
  return z;
}

Eigen::VectorXd measurement_sigmas(const EpochMeasurements& m) {
  Eigen::VectorXd s(m.dim());
  for (size_t i = 0; i < m.channels.size(); ++i) s.segment<3>(3 * i).setConstant(m.channels[i].sigma);
  return s;
}

}  // namespace mocapfuse
