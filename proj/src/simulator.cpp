#include "mocapfuse/simulator.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "mocapfuse/config.hpp"
#include "mocapfuse/error.hpp"

namespace mocapfuse {

namespace {

constexpr double kPi = std::numbers::pi;

// Value and first time derivative.
struct Jet {
  double v = 0.0;
  double d = 0.0;
};

Jet operator+(Jet a, Jet b) { return {a.v + b.v, a.d + b.d}; }
Jet operator*(Jet a, Jet b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
Jet operator*(double s, Jet a) { return {s * a.v, s * a.d}; }
Jet jsin(Jet a) { return {std::sin(a.v), std::cos(a.v) * a.d}; }
Jet jcos(Jet a) { return {std::cos(a.v), -std::sin(a.v) * a.d}; }

// s * sin(2 pi f t + phase)
Jet wave(double amp, double freq, double phase, double t) {
  const double w = 2.0 * kPi * freq;
  return {amp * std::sin(w * t + phase), amp * w * std::cos(w * t + phase)};
}

struct VecJet {
  Vec3 v = Vec3::Zero();
  Vec3 d = Vec3::Zero();
};

VecJet operator+(const VecJet& a, const VecJet& b) { return {a.v + b.v, a.d + b.d}; }
VecJet operator-(const VecJet& a, const VecJet& b) { return {a.v - b.v, a.d - b.d}; }

struct RotJet {
  Mat3 R = Mat3::Identity();
  Mat3 Rd = Mat3::Zero();
};

RotJet operator*(const RotJet& a, const RotJet& b) { return {a.R * b.R, a.Rd * b.R + a.R * b.Rd}; }

RotJet apply_axis(int axis, Jet th) {
  RotJet r;
  r.R = axis == 0 ? rot_x(th.v) : axis == 1 ? rot_y(th.v) : rot_z(th.v);
  r.Rd = th.d * r.R * skew(Vec3::Unit(axis));
  return r;
}

VecJet rotate(const RotJet& r, const Vec3& l) { return {r.R * l, r.Rd * l}; }

Vec3 vee(const Mat3& m) { return {0.5 * (m(2, 1) - m(1, 2)), 0.5 * (m(0, 2) - m(2, 0)), 0.5 * (m(1, 0) - m(0, 1))}; }

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

enum Stream : std::uint32_t { kImuNoise = 1, kBiasDrift = 2, kSlam = 3, kMocap = 4, kJointPlay = 5 };

const Vec3 kDefaultAccelBias[] = {{0.04, -0.03, 0.05}, {-0.05, 0.04, 0.03}, {0.03, 0.05, -0.04}};
const Vec3 kDefaultGyroBias[] = {{0.002, -0.003, 0.0025}, {-0.0025, 0.002, 0.003}, {0.003, 0.0025, -0.002}};

Mat3 default_mounting(int k) {
  switch (k % 3) {
    case 0: return rot_y(0.15) * rot_x(-0.25);
    case 1: return rot_y(-0.35) * rot_x(0.9);
    default: return rot_y(0.5) * rot_x(-0.6);
  }
}

// Joint lever arms in a trunk-aligned frame (x forward, y right, z down).
Vec3 default_parent_arm(int joint) { return joint == 0 ? Vec3(0.02, 0.14, 0.04) : Vec3(0.0, -0.01, 0.15); }
Vec3 default_child_arm(int joint, int links) {
  return joint + 2 == links ? Vec3(-0.03, -0.03, -0.13) : Vec3(0.0, -0.05, -0.14);
}

void require_serial(const ChainModel& chain) {
  chain.validate();
  if (chain.camera_link != 0) throw invalid_argument("simulator needs the camera on link 0");
  for (int j = 0; j < static_cast<int>(chain.joints.size()); ++j) {
    if (chain.joints[j].a != j || chain.joints[j].b != j + 1) {
      throw invalid_argument("simulator needs a serial chain with joint i between links i and i+1");
    }
  }
}

ScenarioKind parse_kind(const std::string& s) {
  if (s == "gait") return ScenarioKind::kGait;
  if (s == "jump") return ScenarioKind::kJump;
  throw Error(ErrorCode::kParse, "unknown scenario kind '" + s + "' (gait|jump)");
}

PathKind parse_path(const std::string& s) {
  if (s == "o_shape") return PathKind::kOShape;
  if (s == "straight") return PathKind::kStraight;
  throw Error(ErrorCode::kParse, "unknown path '" + s + "' (o_shape|straight)");
}

}  // namespace

const char* to_string(ScenarioKind k) { return k == ScenarioKind::kGait ? "gait" : "jump"; }
const char* to_string(PathKind p) { return p == PathKind::kOShape ? "o_shape" : "straight"; }

long ScenarioConfig::sample_count() const { return std::lround(duration * imu_rate); }

void ScenarioConfig::finalize() {
  require_serial(chain);
  const int n = chain.link_count();
  if (!(duration > 0.0) || !(imu_rate > 0.0)) throw invalid_argument("duration and imu_rate must be positive");
  if (1.0 / imu_rate > kMaxPropagationStep) throw invalid_argument("imu_rate below 10 Hz");
  if (!(standstill >= 0.0) || !(ramp > 0.0)) throw invalid_argument("standstill must be >= 0 and ramp > 0");
  if (motion_scale != 0.0 && duration < 2.0 * (standstill + ramp)) {
    throw invalid_argument("duration too short for standstills and ramps");
  }
  if (!(slam_jitter >= 0.0 && slam_jitter < 1.0)) throw invalid_argument("slam_jitter must be in [0, 1)");
  if (!(slam_dropout >= 0.0 && slam_dropout < 1.0)) throw invalid_argument("slam_dropout must be in [0, 1)");
  if (slam_max_gap < 1) throw invalid_argument("slam_max_gap must be >= 1");
  if (!(slam_rate >= 0.0)) throw invalid_argument("slam_rate must be >= 0");
  const double nonneg[] = {accel_noise_density, gyro_noise_density, accel_bias_instability,
                           gyro_bias_instability, slam_sigma, slam_drift, mocap_sigma, joint_play,
                           speed, path_radius, step_rate, jump_height, jump_period, jump_duration};
  for (double v : nonneg) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw invalid_argument("scenario settings must be finite and >= 0");
  }
  if (!(path_radius > 0.0) || !(bias_tau > 0.0)) throw invalid_argument("path_radius and bias_tau must be positive");
  if (!(jump_duration > 0.0) || jump_period < jump_duration) {
    throw invalid_argument("jump_duration must be positive and not exceed jump_period");
  }
  if (accel_bias.empty()) {
    for (int k = 0; k < n; ++k) accel_bias.push_back(kDefaultAccelBias[k % 3]);
  }
  if (gyro_bias.empty()) {
    for (int k = 0; k < n; ++k) gyro_bias.push_back(kDefaultGyroBias[k % 3]);
  }
  if (static_cast<int>(accel_bias.size()) != n || static_cast<int>(gyro_bias.size()) != n) {
    throw invalid_argument("need one accel and gyro bias per link");
  }
  const StateLayout layout(chain);
  if (segments.empty()) {
    for (const auto& seg : layout.segments()) {
      const bool parent = seg.owner == seg.joint;
      const Vec3 arm = parent ? default_parent_arm(seg.joint) : default_child_arm(seg.joint, n);
      segments.push_back(default_mounting(seg.owner).transpose() * arm);
    }
  }
  if (segments.size() != layout.segments().size()) throw invalid_argument("segment count does not match the chain");
}

ScenarioConfig ScenarioConfig::from_config(const KeyValueConfig& cfg) {
  ScenarioConfig s;
  if (cfg.has("links")) s.chain = ChainModel::from_config(cfg);
  s.kind = parse_kind(cfg.get_string("scenario", to_string(s.kind)));
  s.path = parse_path(cfg.get_string("path", to_string(s.path)));
  s.seed = cfg.get_u64("seed", s.seed);
  s.duration = cfg.get_double("duration", s.duration);
  s.imu_rate = cfg.get_double("imu_rate", s.imu_rate);
  s.standstill = cfg.get_double("standstill", s.standstill);
  s.ramp = cfg.get_double("ramp", s.ramp);
  s.speed = cfg.get_double("speed", s.speed);
  s.path_radius = cfg.get_double("path_radius", s.path_radius);
  s.step_rate = cfg.get_double("step_rate", s.step_rate);
  s.motion_scale = cfg.get_double("motion_scale", s.motion_scale);
  s.jump_height = cfg.get_double("jump_height", s.jump_height);
  s.jump_period = cfg.get_double("jump_period", s.jump_period);
  s.jump_duration = cfg.get_double("jump_duration", s.jump_duration);
  s.accel_noise_density = cfg.get_double("accel_noise_density", s.accel_noise_density);
  s.gyro_noise_density = cfg.get_double("gyro_noise_density", s.gyro_noise_density);
  s.bias_drift = cfg.get_bool("bias_drift", s.bias_drift);
  s.accel_bias_instability = cfg.get_double("accel_bias_instability", s.accel_bias_instability);
  s.gyro_bias_instability = cfg.get_double("gyro_bias_instability", s.gyro_bias_instability);
  s.bias_tau = cfg.get_double("bias_tau", s.bias_tau);
  s.slam_rate = cfg.get_double("slam_rate", s.slam_rate);
  s.slam_jitter = cfg.get_double("slam_jitter", s.slam_jitter);
  s.slam_dropout = cfg.get_double("slam_dropout", s.slam_dropout);
  s.slam_max_gap = cfg.get_int("slam_max_gap", s.slam_max_gap);
  s.slam_sigma = cfg.get_double("slam_sigma", s.slam_sigma);
  s.slam_drift = cfg.get_double("slam_drift", s.slam_drift);
  s.mocap_sigma = cfg.get_double("mocap_sigma", s.mocap_sigma);
  s.joint_play = cfg.get_double("joint_play", s.joint_play);
  s.lever_arm = cfg.get_vec3("lever_arm", s.lever_arm);
  const int n = s.chain.link_count();
  for (int k = 0; k < n; ++k) {
    const std::string ka = "accel_bias." + std::to_string(k);
    const std::string kg = "gyro_bias." + std::to_string(k);
    if (cfg.has(ka) || cfg.has(kg)) {
      s.accel_bias.resize(n);
      s.gyro_bias.resize(n);
    }
  }
  // Explicit per-link biases override defaults; unspecified links keep theirs.
  if (!s.accel_bias.empty()) {
    ScenarioConfig d;
    d.chain = s.chain;
    d.finalize();
    for (int k = 0; k < n; ++k) {
      s.accel_bias[k] = cfg.get_vec3("accel_bias." + std::to_string(k), d.accel_bias[k]);
      s.gyro_bias[k] = cfg.get_vec3("gyro_bias." + std::to_string(k), d.gyro_bias[k]);
    }
  }
  const StateLayout layout(s.chain);
  bool any_segment = false;
  for (const auto& seg : layout.segments()) {
    any_segment |= cfg.has("segment." + std::to_string(seg.joint) + "." + std::to_string(seg.owner));
  }
  if (any_segment) {
    ScenarioConfig d;
    d.chain = s.chain;
    d.finalize();
    for (size_t i = 0; i < layout.segments().size(); ++i) {
      const auto& seg = layout.segments()[i];
      s.segments.push_back(cfg.get_vec3(
          "segment." + std::to_string(seg.joint) + "." + std::to_string(seg.owner), d.segments[i]));
    }
  }
  s.finalize();
  return s;
}

std::string ScenarioConfig::to_config_text() const {
  ScenarioConfig c = *this;
  c.finalize();
  std::ostringstream os;
  os << c.chain.to_config_text();
  os << "scenario = " << to_string(c.kind) << "\n"
     << "path = " << to_string(c.path) << "\n"
     << "seed = " << c.seed << "\n"
     << "duration = " << format_double(c.duration) << "\n"
     << "imu_rate = " << format_double(c.imu_rate) << "\n"
     << "standstill = " << format_double(c.standstill) << "\n"
     << "ramp = " << format_double(c.ramp) << "\n"
     << "speed = " << format_double(c.speed) << "\n"
     << "path_radius = " << format_double(c.path_radius) << "\n"
     << "step_rate = " << format_double(c.step_rate) << "\n"
     << "motion_scale = " << format_double(c.motion_scale) << "\n"
     << "jump_height = " << format_double(c.jump_height) << "\n"
     << "jump_period = " << format_double(c.jump_period) << "\n"
     << "jump_duration = " << format_double(c.jump_duration) << "\n"
     << "accel_noise_density = " << format_double(c.accel_noise_density) << "\n"
     << "gyro_noise_density = " << format_double(c.gyro_noise_density) << "\n"
     << "bias_drift = " << (c.bias_drift ? "true" : "false") << "\n"
     << "accel_bias_instability = " << format_double(c.accel_bias_instability) << "\n"
     << "gyro_bias_instability = " << format_double(c.gyro_bias_instability) << "\n"
     << "bias_tau = " << format_double(c.bias_tau) << "\n"
     << "slam_rate = " << format_double(c.slam_rate) << "\n"
     << "slam_jitter = " << format_double(c.slam_jitter) << "\n"
     << "slam_dropout = " << format_double(c.slam_dropout) << "\n"
     << "slam_max_gap = " << c.slam_max_gap << "\n"
     << "slam_sigma = " << format_double(c.slam_sigma) << "\n"
     << "slam_drift = " << format_double(c.slam_drift) << "\n"
     << "mocap_sigma = " << format_double(c.mocap_sigma) << "\n"
     << "joint_play = " << format_double(c.joint_play) << "\n"
     << "lever_arm = " << format_vec3(c.lever_arm) << "\n";
  for (int k = 0; k < c.chain.link_count(); ++k) {
    os << "accel_bias." << k << " = " << format_vec3(c.accel_bias[k]) << "\n";
    os << "gyro_bias." << k << " = " << format_vec3(c.gyro_bias[k]) << "\n";
  }
  const StateLayout layout(c.chain);
  for (size_t i = 0; i < layout.segments().size(); ++i) {
    const auto& seg = layout.segments()[i];
    os << "segment." << seg.joint << "." << seg.owner << " = " << format_vec3(c.segments[i]) << "\n";
  }
  return os.str();
}

TrajectoryModel::TrajectoryModel(ScenarioConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.finalize();
  layout_ = build_layout(cfg_.chain);
  const int n = cfg_.chain.link_count();
  for (int k = 0; k < n; ++k) mounting_.push_back(default_mounting(k));
  parent_arm_.resize(n - 1);
  child_arm_.resize(n - 1);
  for (size_t i = 0; i < layout_->segments().size(); ++i) {
    const auto& seg = layout_->segments()[i];
    (seg.owner == seg.joint ? parent_arm_ : child_arm_)[seg.joint] = cfg_.segments[i];
  }
  auto rng = stream_rng(cfg_.seed, kJointPlay);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  for (int j = 0; j + 1 < n; ++j) play_phase_.push_back({phase(rng), phase(rng), phase(rng)});
}

double TrajectoryModel::envelope(double t) const {
  if (cfg_.motion_scale == 0.0) return 0.0;
  const double ta = cfg_.standstill, tb = ta + cfg_.ramp;
  const double td = cfg_.duration - cfg_.standstill, tc = td - cfg_.ramp;
  if (t <= ta || t >= td) return 0.0;
  if (t < tb) return 0.5 * (1.0 - std::cos(kPi * (t - ta) / cfg_.ramp));
  if (t <= tc) return 1.0;
  return 0.5 * (1.0 - std::cos(kPi * (td - t) / cfg_.ramp));
}

namespace {

Jet envelope_jet(const ScenarioConfig& c, double t) {
  if (c.motion_scale == 0.0) return {};
  const double ta = c.standstill, tb = ta + c.ramp;
  const double td = c.duration - c.standstill, tc = td - c.ramp;
  const double k = kPi / c.ramp;
  if (t <= ta || t >= td) return {};
  if (t < tb) return {0.5 * (1.0 - std::cos(k * (t - ta))), 0.5 * k * std::sin(k * (t - ta))};
  if (t <= tc) return {1.0, 0.0};
  return {0.5 * (1.0 - std::cos(k * (td - t))), -0.5 * k * std::sin(k * (td - t))};
}

// Gain on the oscillatory terms: smootherstep over the ramps, so angles and sway
// keep continuous second derivatives where motion starts and stops.
Jet sway_jet(const ScenarioConfig& c, double t) {
  if (c.motion_scale == 0.0) return {};
  const double ta = c.standstill, tb = ta + c.ramp;
  const double td = c.duration - c.standstill, tc = td - c.ramp;
  auto step = [&](double u) -> Jet {
    return {u * u * u * (10.0 + u * (-15.0 + 6.0 * u)), 30.0 * u * u * (1.0 - u) * (1.0 - u) / c.ramp};
  };
  if (t <= ta || t >= td) return {};
  if (t < tb) return step((t - ta) / c.ramp);
  if (t <= tc) return {1.0, 0.0};
  const Jet down = step((td - t) / c.ramp);
  return {down.v, -down.d};
}

// Integral of the envelope from 0 to t.
double envelope_integral(const ScenarioConfig& c, double t) {
  if (c.motion_scale == 0.0) return 0.0;
  const double ta = c.standstill, tb = ta + c.ramp;
  const double td = c.duration - c.standstill, tc = td - c.ramp;
  const double k = kPi / c.ramp;
  auto ramp_area = [&](double u) { return 0.5 * (u - std::sin(k * u) / k); };
  if (t <= ta) return 0.0;
  if (t < tb) return ramp_area(t - ta);
  if (t <= tc) return 0.5 * c.ramp + (t - tb);
  if (t < td) return 0.5 * c.ramp + (tc - tb) + (0.5 * c.ramp - ramp_area(td - t));
  return c.ramp + (tc - tb);
}

// Vertical excursions of the jump scenario (negative z is up).
Jet jump_offset(const ScenarioConfig& c, double t) {
  if (c.kind != ScenarioKind::kJump || c.motion_scale == 0.0) return {};
  const double first = c.standstill + c.ramp + 0.5;
  const double last_end = c.duration - c.standstill - c.ramp;
  if (t < first) return {};
  const double n = std::floor((t - first) / c.jump_period);
  const double t0 = first + n * c.jump_period;
  if (t0 + c.jump_duration > last_end || t > t0 + c.jump_duration) return {};
  const double k = kPi / c.jump_duration;
  const double s = std::sin(k * (t - t0));
  const double co = std::cos(k * (t - t0));
  const double h = c.motion_scale * c.jump_height;
  return {-h * s * s * s * s, -h * 4.0 * s * s * s * co * k};
}

struct JointProfile {
  double amp[3];
  double freq[3];
  double phase[3];
};

JointProfile joint_profile(int joint, ScenarioKind kind) {
  const double boost = kind == ScenarioKind::kJump ? 1.3 : 1.0;
  if (joint == 0) return {{0.45 * boost, 0.25 * boost, 0.30}, {0.9, 1.27, 0.61}, {0.0, 0.7, 1.9}};
  const double s = 1.0 / (1.0 + 0.3 * (joint - 1));
  return {{0.50 * s * boost, 0.20 * s, 0.35 * s}, {0.9, 1.53, 0.77}, {0.9 + joint, 0.3, 2.3}};
}

}  // namespace

double TrajectoryModel::arc_length(double t) const {
  return cfg_.motion_scale * cfg_.speed * envelope_integral(cfg_, t);
}

std::vector<LinkTruth> TrajectoryModel::evaluate(double t) const {
  const ScenarioConfig& c = cfg_;
  const double sc = c.motion_scale;
  const Jet env = envelope_jet(c, t);
  const Jet s{arc_length(t), sc * c.speed * env.v};
  const Jet sway = sway_jet(c, t);

  // Path point and heading.
  VecJet base;
  Jet heading;
  if (c.path == PathKind::kOShape) {
    const Jet th = (1.0 / c.path_radius) * s;
    const Jet sn = jsin(th), cs = jcos(th);
    base.v = {c.path_radius * sn.v, c.path_radius * (1.0 - cs.v), 0.0};
    base.d = {c.path_radius * sn.d, -c.path_radius * cs.d, 0.0};
    heading = th;
  } else {
    base.v = {s.v, 0.0, 0.0};
    base.d = {s.d, 0.0, 0.0};
  }
  // Step bob, lateral sway along the path normal, jumps.
  const Jet bob = (sc * 0.03) * sway * wave(1.0, c.step_rate, 0.0, t);
  const Jet lat = (sc * 0.02) * sway * wave(1.0, 0.5 * c.step_rate, 0.3, t);
  const Jet nx = -1.0 * jsin(heading), ny = jcos(heading);
  const Jet jump = jump_offset(c, t);
  const Jet lx = lat * nx, ly = lat * ny;
  base.v += Vec3(lx.v, ly.v, -bob.v + jump.v);
  base.d += Vec3(lx.d, ly.d, -bob.d + jump.d);

  const Jet yaw = heading + (sc * 0.06) * sway * wave(1.0, 0.5 * c.step_rate, 0.0, t);
  const Jet pitch = (sc * 0.05) * sway * wave(1.0, c.step_rate, 0.4, t);
  const Jet roll = (sc * 0.04) * sway * wave(1.0, 0.5 * c.step_rate, 1.1, t);
  const RotJet trunk = apply_axis(2, yaw) * apply_axis(1, pitch) * apply_axis(0, roll);

  const int n = c.chain.link_count();
  std::vector<RotJet> att(n);
  RotJet chain = trunk;
  for (int k = 0; k < n; ++k) {
    if (k > 0) {
      const JointProfile jp = joint_profile(k - 1, c.kind);
      Jet ang[3];
      for (int a = 0; a < 3; ++a) ang[a] = sc * (sway * wave(jp.amp[a], jp.freq[a], jp.phase[a], t));
      chain = chain * apply_axis(1, ang[0]) * apply_axis(0, ang[1]) * apply_axis(2, ang[2]);
    }
    att[k] = chain * RotJet{mounting_[k], Mat3::Zero()};
  }

  std::vector<VecJet> pos(n);
  pos[0] = base;
  for (int j = 0; j + 1 < n; ++j) {
    const VecJet joint = pos[j] + rotate(att[j], parent_arm_[j]);
    pos[j + 1] = joint - rotate(att[j + 1], child_arm_[j]);
    if (c.joint_play > 0.0) {
      for (int a = 0; a < 3; ++a) {
        const Jet d = (std::sqrt(2.0) * c.joint_play) * sway *
                      wave(1.0, 0.13 + 0.05 * a, play_phase_[j](a), t);
        pos[j + 1].v(a) += d.v;
        pos[j + 1].d(a) += d.d;
      }
    }
  }

  std::vector<LinkTruth> out(n);
  for (int k = 0; k < n; ++k) {
    out[k].p = pos[k].v;
    out[k].v = pos[k].d;
    out[k].q = dcm_to_quat(att[k].R);
    out[k].w = vee(att[k].R.transpose() * att[k].Rd);
  }
  return out;
}

NavState GroundTruth::nav_state(size_t k) const {
  NavState x(layout);
  const TruthEpoch& e = epochs.at(k);
  for (int i = 0; i < layout->link_count(); ++i) {
    x.set_p(i, e.links[i].p);
    x.set_v(i, e.links[i].v);
    x.set_q(i, e.links[i].q);
    x.set_ba(i, e.accel_bias[i]);
    x.set_bg(i, e.gyro_bias[i]);
  }
  for (size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = layout->segments()[s];
    x.set_segment(seg.joint, seg.owner, segments[s]);
  }
  x.set_lc(lever_arm);
  return x;
}

Vec3 GroundTruth::camera_position(size_t k) const {
  const int c = layout->model().camera_link;
  const LinkTruth& l = epochs.at(k).links[c];
  return l.p + quat_to_dcm(l.q) * lever_arm;
}

GroundTruth gen_trajectory(const ScenarioConfig& cfg_in) {
  const TrajectoryModel model(cfg_in);
  const ScenarioConfig& cfg = model.config();
  GroundTruth gt;
  gt.layout = model.layout();
  gt.dt = cfg.dt();
  gt.segments = cfg.segments;
  gt.lever_arm = cfg.lever_arm;
  const int n = cfg.chain.link_count();
  const long samples = cfg.sample_count();

  std::vector<Vec3> ba = cfg.accel_bias, bg = cfg.gyro_bias;
  auto rng = stream_rng(cfg.seed, kBiasDrift);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double decay = std::exp(-gt.dt / cfg.bias_tau);
  const double drive = std::sqrt(1.0 - decay * decay);

  gt.epochs.reserve(samples + 1);
  for (long k = 0; k <= samples; ++k) {
    TruthEpoch e;
    e.t = static_cast<double>(k) * gt.dt;
    e.links = model.evaluate(e.t);
    if (k > 0) {
      // Keep quaternion signs continuous for readable traces.
      for (int i = 0; i < n; ++i) {
        if (e.links[i].q.coeffs().dot(gt.epochs.back().links[i].q.coeffs()) < 0.0) {
          e.links[i].q = UnitQuaternion(-e.links[i].q.coeffs());
        }
      }
      if (cfg.bias_drift) {
        for (int i = 0; i < n; ++i) {
          for (int a = 0; a < 3; ++a) {
            ba[i](a) = cfg.accel_bias[i](a) + decay * (ba[i](a) - cfg.accel_bias[i](a)) +
                       cfg.accel_bias_instability * drive * normal(rng);
            bg[i](a) = cfg.gyro_bias[i](a) + decay * (bg[i](a) - cfg.gyro_bias[i](a)) +
                       cfg.gyro_bias_instability * drive * normal(rng);
          }
        }
      }
    }
    e.accel_bias = ba;
    e.gyro_bias = bg;
    const bool still = model.envelope(e.t) == 0.0 && model.envelope(e.t + gt.dt) == 0.0;
    e.stationary.assign(n, still);
    gt.epochs.push_back(std::move(e));
  }
  return gt;
}

std::vector<ImuSample> synthesize_imu(const GroundTruth& gt, const ScenarioConfig& cfg) {
  const int n = gt.layout->link_count();
  const Vec3 g = gt.layout->model().gravity_n;
  const double dt = gt.dt;
  const double sd_a = cfg.accel_noise_density * std::sqrt(1.0 / dt);
  const double sd_g = cfg.gyro_noise_density * std::sqrt(1.0 / dt);
  auto rng = stream_rng(cfg.seed, kImuNoise);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<ImuSample> out;
  const size_t samples = gt.epochs.size() - 1;
  out.reserve(samples * n);
  for (size_t k = 0; k < samples; ++k) {
    const TruthEpoch& a = gt.epochs[k];
    const TruthEpoch& b = gt.epochs[k + 1];
    for (int i = 0; i < n; ++i) {
      ImuSample s;
      s.t = a.t;
      s.link = i;
      const Dcm r = quat_to_dcm(a.links[i].q);
      const Vec3 acc = (b.links[i].v - a.links[i].v) / dt;
      s.f = r.transpose() * (acc - g);
      s.w = quat_to_rotvec(quat_mul(a.links[i].q.conjugate(), b.links[i].q)) / dt;
      const Vec3 na(normal(rng), normal(rng), normal(rng));
      const Vec3 ng(normal(rng), normal(rng), normal(rng));
      s.f += a.accel_bias[i] + sd_a * na;
      s.w += a.gyro_bias[i] + sd_g * ng;
      out.push_back(s);
    }
  }
  return out;
}

std::vector<PositionFix> synthesize_slam(const GroundTruth& gt, const ScenarioConfig& cfg_in) {
  const TrajectoryModel model(cfg_in);
  const ScenarioConfig& cfg = model.config();
  auto rng = stream_rng(cfg.seed, kSlam);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> gap(1, cfg.slam_max_gap);
  const double interval = 1.0 / cfg.effective_slam_rate();
  const double t_end = gt.epochs.back().t;
  const int c = cfg.chain.camera_link;
  Vec3 drift_phase;
  for (int a = 0; a < 3; ++a) drift_phase(a) = 2.0 * kPi * unit(rng);

  std::vector<PositionFix> out;
  int skip = 0;
  for (long n = 1;; ++n) {
    const double t = static_cast<double>(n) * interval + cfg.slam_jitter * interval * (unit(rng) - 0.5);
    if (t > t_end) break;
    const Vec3 noise(normal(rng), normal(rng), normal(rng));
    const bool open_gap = unit(rng) < cfg.slam_dropout;
    const int gap_len = gap(rng);
    if (skip > 0) {
      --skip;
      continue;
    }
    if (open_gap) {
      skip = gap_len - 1;
      continue;
    }
    const LinkTruth l = model.evaluate(t)[c];
    Vec3 p = l.p + quat_to_dcm(l.q) * cfg.lever_arm;
    if (cfg.slam_drift > 0.0) {
      p += cfg.slam_drift * Vec3(std::sin(2 * kPi * t / 97.0 + drift_phase(0)),
                                 std::sin(2 * kPi * t / 71.0 + drift_phase(1)),
                                 0.5 * std::sin(2 * kPi * t / 113.0 + drift_phase(2)));
    }
    out.push_back({t, p + cfg.slam_sigma * noise, cfg.slam_sigma > 0.0 ? cfg.slam_sigma : 0.05});
  }
  return out;
}

std::vector<PositionFix> synthesize_mocap(const GroundTruth& gt, const ScenarioConfig& cfg) {
  auto rng = stream_rng(cfg.seed, kMocap);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<PositionFix> out;
  out.reserve(gt.epochs.size());
  for (size_t k = 0; k < gt.epochs.size(); ++k) {
    const Vec3 noise(normal(rng), normal(rng), normal(rng));
    out.push_back({gt.epochs[k].t, gt.camera_position(k) + cfg.mocap_sigma * noise,
                   cfg.mocap_sigma > 0.0 ? cfg.mocap_sigma : 0.002});
  }
  return out;
}

Scenario simulate(ScenarioConfig cfg) {
  cfg.finalize();
  Scenario s;
  s.config = cfg;
  s.truth = gen_trajectory(cfg);
  s.imu = synthesize_imu(s.truth, cfg);
  s.slam = synthesize_slam(s.truth, cfg);
  s.mocap = synthesize_mocap(s.truth, cfg);
  return s;
}

}  // namespace mocapfuse
