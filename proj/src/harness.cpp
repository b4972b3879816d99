#include "mocapfuse/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>

#include "mocapfuse/config.hpp"
#include "mocapfuse/error.hpp"
#include "mocapfuse/record_io.hpp"

namespace mocapfuse {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double wrap_deg(double d) {
  while (d > 180.0) d -= 360.0;
  while (d < -180.0) d += 360.0;
  return d;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

const char* to_string(FilterKind f) { return f == FilterKind::kEkf ? "ekf" : "srukf"; }

const char* to_string(PositionSource p) {
  switch (p) {
    case PositionSource::kSlam: return "slam";
    case PositionSource::kMocap: return "mocap";
    default: return "none";
  }
}

const char* to_string(GravityMode g) {
  switch (g) {
    case GravityMode::kThroughout: return "throughout";
    case GravityMode::kStartup: return "startup";
    default: return "off";
  }
}

FilterKind parse_filter(const std::string& s) {
  if (s == "ekf") return FilterKind::kEkf;
  if (s == "srukf") return FilterKind::kSrukf;
  throw Error(ErrorCode::kParse, "unknown filter '" + s + "' (ekf|srukf)");
}

PositionSource parse_pos_source(const std::string& s) {
  if (s == "slam") return PositionSource::kSlam;
  if (s == "mocap") return PositionSource::kMocap;
  if (s == "none") return PositionSource::kNone;
  throw Error(ErrorCode::kParse, "unknown position source '" + s + "' (slam|mocap|none)");
}

GravityMode parse_gravity_mode(const std::string& s) {
  if (s == "throughout") return GravityMode::kThroughout;
  if (s == "startup") return GravityMode::kStartup;
  if (s == "off") return GravityMode::kOff;
  throw Error(ErrorCode::kParse, "unknown gravity mode '" + s + "' (throughout|startup|off)");
}

std::string RunConfig::variant_name() const {
  std::string name = filter == FilterKind::kEkf ? "EKF" : "SRUKF";
  switch (pos_source) {
    case PositionSource::kSlam: return name + "-S";
    case PositionSource::kMocap: return name + "-V";
    default: return name + "-N";
  }
}

RunConfig RunConfig::from_config(const KeyValueConfig& cfg, double imu_rate) {
  RunConfig r;
  r.noise = NoiseConfig::table_defaults(imu_rate);
  r.noise.apply(cfg);
  r.filter = parse_filter(cfg.get_string("filter", to_string(r.filter)));
  r.pos_source = parse_pos_source(cfg.get_string("pos_source", to_string(r.pos_source)));
  r.joint_position = cfg.get_bool("joint_position", r.joint_position);
  r.joint_velocity = cfg.get_bool("joint_velocity", r.joint_velocity);
  r.gravity = parse_gravity_mode(cfg.get_string("gravity_mode", to_string(r.gravity)));
  r.stationary.gyro = cfg.get_double("stationary_gyro", r.stationary.gyro);
  r.stationary.accel = cfg.get_double("stationary_accel", r.stationary.accel);
  r.stationary.min_window = cfg.get_double("stationary_window", r.stationary.min_window);
  r.kappa = cfg.get_double("kappa", r.kappa);
  r.level_window = cfg.get_double("level_window", r.level_window);
  r.divergence_limit = cfg.get_double("divergence_limit", r.divergence_limit);
  if (!(r.stationary.min_window > 0.0) || !(r.level_window > 0.0) || !(r.divergence_limit > 0.0)) {
    throw invalid_argument("stationary_window, level_window and divergence_limit must be positive");
  }
  return r;
}

std::string RunConfig::to_config_text() const {
  std::ostringstream os;
  os << "filter = " << to_string(filter) << "\n"
     << "pos_source = " << to_string(pos_source) << "\n"
     << "joint_position = " << (joint_position ? "true" : "false") << "\n"
     << "joint_velocity = " << (joint_velocity ? "true" : "false") << "\n"
     << "gravity_mode = " << to_string(gravity) << "\n"
     << "stationary_gyro = " << format_double(stationary.gyro) << "\n"
     << "stationary_accel = " << format_double(stationary.accel) << "\n"
     << "stationary_window = " << format_double(stationary.min_window) << "\n"
     << "kappa = " << format_double(kappa) << "\n"
     << "level_window = " << format_double(level_window) << "\n"
     << "divergence_limit = " << format_double(divergence_limit) << "\n"
     << noise.to_config_text();
  return os.str();
}

EventQueue make_queue(std::vector<ImuSample> imu, std::vector<PositionFix> slam,
                      std::vector<PositionFix> mocap, int link_count) {
  std::map<int, double> last;
  for (const auto& s : imu) {
    if (s.link < 0 || s.link >= link_count) {
      throw Error(ErrorCode::kParse, "IMU sample at t=" + fmt(s.t) + " has unknown link id " +
                                         std::to_string(s.link));
    }
    auto it = last.find(s.link);
    if (it != last.end() && !(s.t > it->second)) {
      throw Error(ErrorCode::kParse, "IMU timestamp regression on link " + std::to_string(s.link) +
                                         " at t=" + fmt(s.t));
    }
    last[s.link] = s.t;
  }
  auto check_fixes = [](const std::vector<PositionFix>& v, const char* name) {
    for (size_t i = 0; i < v.size(); ++i) {
      if (!(v[i].sigma > 0.0)) throw Error(ErrorCode::kParse, std::string(name) + " fix with nonpositive sigma");
      if (i > 0 && !(v[i].t > v[i - 1].t)) {
        throw Error(ErrorCode::kParse, std::string(name) + " timestamp regression at t=" + fmt(v[i].t));
      }
    }
  };
  check_fixes(slam, "SLAM");
  check_fixes(mocap, "mocap");

  EventQueue q;
  q.events.reserve(imu.size() + slam.size() + mocap.size());
  for (size_t i = 0; i < imu.size(); ++i) q.events.push_back({imu[i].t, Event::Kind::kImu, i});
  for (size_t i = 0; i < slam.size(); ++i) q.events.push_back({slam[i].t, Event::Kind::kSlam, i});
  for (size_t i = 0; i < mocap.size(); ++i) q.events.push_back({mocap[i].t, Event::Kind::kMocap, i});
  std::stable_sort(q.events.begin(), q.events.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    return static_cast<int>(a.kind) < static_cast<int>(b.kind);
  });
  q.imu = std::move(imu);
  q.slam = std::move(slam);
  q.mocap = std::move(mocap);
  return q;
}

EventQueue ingest_streams(const StreamPaths& paths, int link_count) {
  auto imu = load_imu(paths.imu, link_count);
  auto slam = paths.slam ? load_fixes(*paths.slam) : std::vector<PositionFix>{};
  auto mocap = paths.mocap ? load_fixes(*paths.mocap) : std::vector<PositionFix>{};
  return make_queue(std::move(imu), std::move(slam), std::move(mocap), link_count);
}

// ---------------------------------------------------------------------------

struct FusionEngine::Backend {
  std::optional<Ekf> ekf;
  std::optional<Srukf> srukf;

  void propagate(std::span<const ImuSample> epoch, double dt) {
    if (ekf) ekf->propagate(epoch, dt);
    else srukf->propagate(epoch, dt);
  }
  void correct(const EpochMeasurements& m) {
    if (ekf) ekf->correct(m);
    else srukf->correct(m);
  }
  const NavState& nav() const { return ekf ? ekf->nav() : srukf->nav(); }
  Eigen::MatrixXd covariance() const { return ekf ? ekf->covariance() : srukf->covariance(); }
};

FusionEngine::FusionEngine(ChainModel chain, RunConfig cfg)
    : chain_(std::move(chain)), cfg_(std::move(cfg)) {
  chain_.validate();
  cfg_.noise.validate();
  layout_ = build_layout(chain_);
  windows_.resize(chain_.link_count());
  startup_done_.assign(chain_.link_count(), false);
}

FusionEngine::~FusionEngine() = default;
FusionEngine::FusionEngine(FusionEngine&&) noexcept = default;
FusionEngine& FusionEngine::operator=(FusionEngine&&) noexcept = default;

void FusionEngine::set_initial_state(const NavState& x0) {
  if (backend_) throw invalid_argument("engine already initialized");
  if (x0.layout().state_dim() != layout_->state_dim() || !x0.layout().same_slices(*layout_)) {
    throw invalid_argument("initial state layout does not match the chain");
  }
  preset_ = x0;
}

bool FusionEngine::initialized() const { return static_cast<bool>(backend_); }

const NavState& FusionEngine::current() const {
  if (!backend_) throw invalid_argument("engine not initialized yet");
  return backend_->nav();
}

Eigen::MatrixXd FusionEngine::covariance() const {
  if (!backend_) throw invalid_argument("engine not initialized yet");
  return backend_->covariance();
}

const SrukfStats* FusionEngine::srukf_stats() const {
  return backend_ && backend_->srukf ? &backend_->srukf->stats() : nullptr;
}

const Eigen::MatrixXd* FusionEngine::sqrt_covariance() const {
  return backend_ && backend_->srukf ? &backend_->srukf->sqrt_covariance() : nullptr;
}

void FusionEngine::push_imu(const ImuSample& s) {
  if (finished_) throw invalid_argument("engine already finished");
  const int n = chain_.link_count();
  if (s.link < 0 || s.link >= n) {
    throw Error(ErrorCode::kParse, "IMU sample has unknown link id " + std::to_string(s.link));
  }
  if (!s.f.allFinite() || !s.w.allFinite() || !std::isfinite(s.t)) {
    throw Error(ErrorCode::kParse, "non-finite IMU sample at t=" + fmt(s.t));
  }
  if (!partial_.empty() && s.t != partial_.front().t) {
    throw Error(ErrorCode::kParse, "IMU epoch at t=" + fmt(partial_.front().t) + " is missing links");
  }
  if (partial_.empty() && !(s.t > last_imu_t_)) {
    throw Error(ErrorCode::kParse, "IMU timestamp regression at t=" + fmt(s.t));
  }
  for (const auto& p : partial_) {
    if (p.link == s.link) {
      throw Error(ErrorCode::kParse, "duplicate IMU sample for link " + std::to_string(s.link) +
                                         " at t=" + fmt(s.t));
    }
  }
  partial_.push_back(s);
  if (static_cast<int>(partial_.size()) < n) return;
  std::sort(partial_.begin(), partial_.end(), [](const ImuSample& a, const ImuSample& b) { return a.link < b.link; });
  last_imu_t_ = s.t;
  epochs_.push_back(std::move(partial_));
  partial_.clear();
  on_epoch_complete();
}

void FusionEngine::push_fix(const PositionFix& f) {
  if (finished_) throw invalid_argument("engine already finished");
  if (!(f.t > last_fix_t_)) throw Error(ErrorCode::kParse, "fix timestamp regression at t=" + fmt(f.t));
  if (!(f.sigma > 0.0) || !f.p.allFinite()) throw Error(ErrorCode::kParse, "invalid fix at t=" + fmt(f.t));
  last_fix_t_ = f.t;
  if (!first_fix_) first_fix_ = f;
  fixes_.push_back(f);
}

void FusionEngine::on_epoch_complete() {
  if (!backend_) {
    if (!preset_ && epochs_.back().front().t - epochs_.front().front().t < cfg_.level_window) return;
    initialize();
  }
  while (epochs_.size() >= 2) {
    process(0, true);
    epochs_.pop_front();
  }
}

void FusionEngine::finish() {
  if (finished_) return;
  if (!partial_.empty()) {
    throw Error(ErrorCode::kParse, "IMU epoch at t=" + fmt(partial_.front().t) + " is missing links");
  }
  if (epochs_.empty() && !backend_) throw Error(ErrorCode::kParse, "no IMU samples");
  if (!backend_) initialize();
  while (!epochs_.empty()) {
    process(0, epochs_.size() >= 2);
    epochs_.pop_front();
  }
  finished_ = true;
}

void FusionEngine::initialize() {
  NavState x0(layout_);
  if (preset_) {
    x0 = *preset_;
  } else {
    const int n = chain_.link_count();
    const double t0 = epochs_.front().front().t;
    std::vector<Vec3> fsum(n, Vec3::Zero());
    int count = 0;
    for (const auto& e : epochs_) {
      if (e.front().t > t0 + cfg_.level_window + 1e-9) break;
      for (int k = 0; k < n; ++k) fsum[k] += e[k].f;
      ++count;
    }
    Vec3 p0 = Vec3::Zero();
    if (cfg_.pos_source != PositionSource::kNone && first_fix_) p0 = first_fix_->p;
    for (int k = 0; k < n; ++k) {
      const Vec3 f = fsum[k] / count;
      const double roll = std::atan2(-f.y(), -f.z());
      const double pitch = std::atan2(f.x(), std::hypot(f.y(), f.z()));
      x0.set_q(k, dcm_to_quat(rot_y(pitch) * rot_x(roll)));
      x0.set_p(k, p0);
    }
  }
  const Eigen::MatrixXd P0 = initial_covariance(*layout_, cfg_.noise);
  backend_ = std::make_unique<Backend>();
  if (cfg_.filter == FilterKind::kEkf) backend_->ekf.emplace(x0, P0, cfg_.noise);
  else backend_->srukf.emplace(x0, P0, cfg_.noise, cfg_.kappa);
}

void FusionEngine::process(size_t idx, bool has_next) {
  const std::vector<ImuSample>& cur = epochs_[idx];
  const int n = chain_.link_count();
  const double t = cur.front().t;
  const double dt = has_next ? epochs_[idx + 1].front().t - t : 0.0;
  if (has_next && dt > kMaxPropagationStep) {
    throw Error(ErrorCode::kParse, "IMU gap of " + fmt(dt) + " s at t=" + fmt(t));
  }

  EpochMeasurements m;
  m.f_raw.resize(n);
  m.w_raw.resize(n);
  for (int k = 0; k < n; ++k) {
    if (prev_epoch_.empty()) {
      m.f_raw[k] = cur[k].f;
      m.w_raw[k] = cur[k].w;
    } else {
      m.f_raw[k] = 0.5 * (prev_epoch_[k].f + cur[k].f);
      m.w_raw[k] = 0.5 * (prev_epoch_[k].w + cur[k].w);
    }
  }
  const int joints = static_cast<int>(chain_.joints.size());
  if (cfg_.joint_position) {
    for (int j = 0; j < joints; ++j) m.add_joint({j, JointKind::kPosition, cfg_.noise.joint_pos_sigma});
  }
  if (cfg_.joint_velocity) {
    for (int j = 0; j < joints; ++j) m.add_joint({j, JointKind::kVelocity, cfg_.noise.joint_vel_sigma});
  }
  int gravity_links = 0;
  const double g_norm = chain_.gravity_n.norm();
  for (int k = 0; k < n; ++k) {
    auto& w = windows_[k];
    w.push_back(cur[k]);
    while (w.size() > 1 && w[1].t <= t - cfg_.stationary.min_window + 1e-9) w.pop_front();
    if (cfg_.gravity == GravityMode::kOff || startup_done_[k]) continue;
    if (w.back().t - w.front().t < cfg_.stationary.min_window - 1e-9) continue;
    const std::vector<ImuSample> window(w.begin(), w.end());
    const StationaryFlag flag = detect_stationary(window, g_norm, cfg_.stationary);
    if (flag.is_stationary) {
      m.add_gravity(flag, cfg_.noise.gravity_sigma);
      ++gravity_links;
    } else if (cfg_.gravity == GravityMode::kStartup) {
      startup_done_[k] = true;
    }
  }
  if (cfg_.pos_source != PositionSource::kNone) {
    const double half_prev = prev_epoch_.empty() ? 0.0 : 0.5 * (t - prev_epoch_.front().t);
    const double half_next = has_next ? 0.5 * dt : (half_prev > 0.0 ? half_prev : 0.5 * kMaxPropagationStep);
    while (!fixes_.empty() && fixes_.front().t < t - std::max(half_prev, half_next)) fixes_.pop_front();
    while (!fixes_.empty() && fixes_.front().t < t + half_next) {
      m.add_camera_fix(fixes_.front());
      fixes_.pop_front();
    }
  } else {
    fixes_.clear();
  }

  using clock = std::chrono::steady_clock;
  auto check = [&](const char* stage) {
    const NavState& x = backend_->nav();
    bool bad = !x.all_finite();
    for (int k = 0; k < n && !bad; ++k) bad = x.p(k).norm() > cfg_.divergence_limit;
    if (bad) throw Error(ErrorCode::kDivergence, std::string("filter diverged after ") + stage + " at t=" + fmt(t));
  };
  const auto c0 = clock::now();
  backend_->correct(m);
  const auto c1 = clock::now();
  check("correction");
  EpochRecord rec{t, backend_->nav(), 0.0, static_cast<int>(m.channels.size()), gravity_links};
  double elapsed = std::chrono::duration<double, std::milli>(c1 - c0).count();
  if (has_next) {
    const auto p0 = clock::now();
    backend_->propagate(cur, dt);
    const auto p1 = clock::now();
    elapsed += std::chrono::duration<double, std::milli>(p1 - p0).count();
    check("propagation");
  }
  rec.cycle_ms = elapsed;
  trace_.push_back(std::move(rec));
  prev_epoch_ = cur;
  if (hook_) hook_(*this);
}

void replay(FusionEngine& engine, const EventQueue& queue, PositionSource source) {
  for (const Event& e : queue.events) {
    switch (e.kind) {
      case Event::Kind::kImu: engine.push_imu(queue.imu[e.index]); break;
      case Event::Kind::kSlam:
        if (source == PositionSource::kSlam) engine.push_fix(queue.slam[e.index]);
        break;
      case Event::Kind::kMocap:
        if (source == PositionSource::kMocap) engine.push_fix(queue.mocap[e.index]);
        break;
    }
  }
  engine.finish();
}

std::vector<EpochRecord> run_filter(const EventQueue& queue, const ChainModel& chain, const RunConfig& cfg,
                                    const NavState* initial, SrukfStats* stats) {
  FusionEngine engine(chain, cfg);
  if (initial) engine.set_initial_state(*initial);
  replay(engine, queue, cfg.pos_source);
  if (stats && engine.srukf_stats()) *stats = *engine.srukf_stats();
  return engine.trace();
}

// ---------------------------------------------------------------------------

double Metrics::segment_conv_s() const {
  double worst = 0.0;
  for (const auto& s : segments) {
    if (s.conv_s < 0.0) return -1.0;
    worst = std::max(worst, s.conv_s);
  }
  return worst;
}

std::string Metrics::to_text(bool with_timing) const {
  std::ostringstream os;
  os << "epochs = " << epochs << "\n";
  os << "duration_s = " << fmt(duration_s) << "\n";
  os << "diverged = " << (diverged ? "true" : "false") << "\n";
  if (diverged) os << "divergence_reason = " << divergence_reason << "\n";
  os << "mean_pos_rmse_cm = " << fmt(mean_pos_rmse_cm) << "\n";
  os << "mean_att_rmse_deg = " << fmt(mean_att_rmse_deg) << "\n";
  for (size_t k = 0; k < links.size(); ++k) {
    const auto& l = links[k];
    const std::string p = "link." + std::to_string(k) + ".";
    os << p << "pos_rmse_cm = " << fmt(l.pos_rmse_cm) << "\n";
    os << p << "att_rmse_deg = " << fmt(l.att_rmse_deg) << "\n";
    os << p << "roll_rmse_deg = " << fmt(l.euler_rmse_deg(0)) << "\n";
    os << p << "pitch_rmse_deg = " << fmt(l.euler_rmse_deg(1)) << "\n";
    os << p << "yaw_rmse_deg = " << fmt(l.euler_rmse_deg(2)) << "\n";
    os << p << "max_pos_err_m = " << fmt(l.max_pos_err_m) << "\n";
    os << p << "accel_bias_err = " << fmt(l.accel_bias_err) << "\n";
    os << p << "accel_bias_rel = " << fmt(l.accel_bias_rel) << "\n";
    os << p << "gyro_bias_err = " << fmt(l.gyro_bias_err) << "\n";
    os << p << "gyro_bias_rel = " << fmt(l.gyro_bias_rel) << "\n";
    os << p << "gyro_bias_conv_s = " << fmt(l.gyro_bias_conv_s) << "\n";
    os << p << "accel_bias_conv_s = " << fmt(l.accel_bias_conv_s) << "\n";
  }
  for (const auto& s : segments) {
    const std::string p = "segment." + std::to_string(s.joint) + "." + std::to_string(s.owner) + ".";
    os << p << "final_err_m = " << fmt(s.final_err_m) << "\n";
    os << p << "conv_s = " << fmt(s.conv_s) << "\n";
  }
  os << "lever_arm_err_m = " << fmt(lever_arm_err_m) << "\n";
  os << "lever_arm_conv_s = " << fmt(lever_arm_conv_s) << "\n";
  os << "srukf_rejected_channels = " << srukf.rejected_channels << "\n";
  os << "srukf_mean_nonconverged = " << srukf.mean_nonconverged << "\n";
  if (with_timing) os << "mean_cycle_ms = " << fmt(mean_cycle_ms) << "\n";
  return os.str();
}

namespace {

size_t nearest_truth(const GroundTruth& truth, double t) {
  const auto& ep = truth.epochs;
  auto it = std::lower_bound(ep.begin(), ep.end(), t, [](const TruthEpoch& e, double v) { return e.t < v; });
  size_t j = static_cast<size_t>(it - ep.begin());
  if (j == ep.size()) j = ep.size() - 1;
  if (j > 0 && std::abs(ep[j - 1].t - t) <= std::abs(ep[j].t - t)) --j;
  if (std::abs(ep[j].t - t) > 0.5 * truth.dt + 1e-9) {
    throw invalid_argument("estimate at t=" + fmt(t) + " has no truth epoch within dt/2");
  }
  return j;
}

// Tracks the time after which an error stays below its threshold.
struct Convergence {
  double since = -1.0;
  bool below = false;
  void add(double t, bool ok) {
    if (ok && !below) since = t;
    if (!ok) since = -1.0;
    below = ok;
  }
};

}  // namespace

Metrics compute_metrics(const std::vector<EpochRecord>& trace, const GroundTruth& truth) {
  if (trace.empty()) throw invalid_argument("empty estimate trace");
  if (truth.epochs.empty()) throw invalid_argument("empty truth");
  const StateLayout& lay = *truth.layout;
  const int n = lay.link_count();
  const size_t nseg = lay.segments().size();

  Metrics m;
  m.links.resize(n);
  m.segments.resize(nseg);
  std::vector<double> pos2(n, 0.0), att2(n, 0.0);
  std::vector<Vec3> eul2(n, Vec3::Zero());
  std::vector<Convergence> gconv(n), aconv(n), sconv(nseg);
  Convergence lconv;
  double cycle = 0.0;

  for (const EpochRecord& r : trace) {
    const TruthEpoch& te = truth.epochs[nearest_truth(truth, r.t)];
    if (!r.x.layout().same_slices(lay)) throw invalid_argument("estimate layout does not match truth");
    for (int k = 0; k < n; ++k) {
      LinkMetrics& lm = m.links[k];
      const double pe = (r.x.p(k) - te.links[k].p).norm();
      pos2[k] += pe * pe;
      lm.max_pos_err_m = std::max(lm.max_pos_err_m, pe);
      if (pe > 1.0 && lm.first_over_1m_s < 0.0) lm.first_over_1m_s = r.t - trace.front().t;
      const UnitQuaternion q = r.x.q(k);
      const double ae = rotation_angle_between(te.links[k].q, q) * kRadToDeg;
      att2[k] += ae * ae;
      const Vec3 de = euler_zyx(q) * kRadToDeg;
      const Vec3 dt = euler_zyx(te.links[k].q) * kRadToDeg;
      for (int a = 0; a < 3; ++a) {
        const double d = wrap_deg(de(a) - dt(a));
        eul2[k](a) += d * d;
      }
      const double gb = te.gyro_bias[k].norm();
      const double ab = te.accel_bias[k].norm();
      const double ge = (r.x.bg(k) - te.gyro_bias[k]).norm();
      const double ae_b = (r.x.ba(k) - te.accel_bias[k]).norm();
      gconv[k].add(r.t, ge < kGyroBiasThreshold * gb);
      aconv[k].add(r.t, ae_b < kAccelBiasThreshold * ab);
      lm.gyro_bias_err = ge;
      lm.accel_bias_err = ae_b;
      lm.gyro_bias_rel = gb > 0.0 ? ge / gb : 0.0;
      lm.accel_bias_rel = ab > 0.0 ? ae_b / ab : 0.0;
    }
    for (size_t s = 0; s < nseg; ++s) {
      const auto& seg = lay.segments()[s];
      const double e = (r.x.segment(seg.joint, seg.owner) - truth.segments[s]).norm();
      sconv[s].add(r.t, e < kSegmentThreshold);
      m.segments[s].final_err_m = e;
    }
    const double le = (r.x.lc() - truth.lever_arm).norm();
    lconv.add(r.t, le < kSegmentThreshold);
    m.lever_arm_err_m = le;
    cycle += r.cycle_ms;
  }

  const double cnt = static_cast<double>(trace.size());
  for (int k = 0; k < n; ++k) {
    LinkMetrics& lm = m.links[k];
    lm.pos_rmse_cm = 100.0 * std::sqrt(pos2[k] / cnt);
    lm.att_rmse_deg = std::sqrt(att2[k] / cnt);
    lm.euler_rmse_deg = (eul2[k] / cnt).cwiseSqrt();
    lm.gyro_bias_conv_s = gconv[k].since;
    lm.accel_bias_conv_s = aconv[k].since;
    m.mean_pos_rmse_cm += lm.pos_rmse_cm / n;
    m.mean_att_rmse_deg += lm.att_rmse_deg / n;
  }
  for (size_t s = 0; s < nseg; ++s) {
    m.segments[s].joint = lay.segments()[s].joint;
    m.segments[s].owner = lay.segments()[s].owner;
    m.segments[s].conv_s = sconv[s].since;
  }
  m.lever_arm_conv_s = lconv.since;
  m.mean_cycle_ms = cycle / cnt;
  m.epochs = static_cast<long>(trace.size());
  m.duration_s = trace.back().t - trace.front().t;
  return m;
}

void write_trace(const std::filesystem::path& path, const std::vector<EpochRecord>& trace,
                 const GroundTruth& truth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "t,link,px,py,pz,true_px,true_py,true_pz,pos_err_m,att_err_deg,"
         "roll_deg,pitch_deg,yaw_deg,true_roll_deg,true_pitch_deg,true_yaw_deg\n";
  std::string line;
  char buf[40];
  auto put = [&](double v) {
    const int len = std::snprintf(buf, sizeof buf, "%.9g", v);
    line += ',';
    line.append(buf, len);
  };
  for (const auto& r : trace) {
    const TruthEpoch& te = truth.epochs[nearest_truth(truth, r.t)];
    for (int k = 0; k < r.x.layout().link_count(); ++k) {
      line.clear();
      const int len = std::snprintf(buf, sizeof buf, "%.9g,%d", r.t, k);
      line.append(buf, len);
      const Vec3 p = r.x.p(k), tp = te.links[k].p;
      for (int a = 0; a < 3; ++a) put(p(a));
      for (int a = 0; a < 3; ++a) put(tp(a));
      put((p - tp).norm());
      put(rotation_angle_between(te.links[k].q, r.x.q(k)) * kRadToDeg);
      const Vec3 e = euler_zyx(r.x.q(k)) * kRadToDeg, et = euler_zyx(te.links[k].q) * kRadToDeg;
      for (int a = 0; a < 3; ++a) put(e(a));
      for (int a = 0; a < 3; ++a) put(et(a));
      line += '\n';
      out << line;
    }
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

void write_estimates(const std::filesystem::path& path, const std::vector<EpochRecord>& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "t,link,px,py,pz,vx,vy,vz,qw,qx,qy,qz,roll_deg,pitch_deg,yaw_deg\n";
  std::string line;
  char buf[40];
  auto put = [&](double v) {
    const int len = std::snprintf(buf, sizeof buf, "%.9g", v);
    line += ',';
    line.append(buf, len);
  };
  for (const auto& r : trace) {
    for (int k = 0; k < r.x.layout().link_count(); ++k) {
      line.clear();
      const int len = std::snprintf(buf, sizeof buf, "%.9g,%d", r.t, k);
      line.append(buf, len);
      const Vec3 p = r.x.p(k), v = r.x.v(k);
      for (int a = 0; a < 3; ++a) put(p(a));
      for (int a = 0; a < 3; ++a) put(v(a));
      const Vec4 q = r.x.q(k).coeffs();
      for (int a = 0; a < 4; ++a) put(q(a));
      const Vec3 e = euler_zyx(r.x.q(k)) * kRadToDeg;
      for (int a = 0; a < 3; ++a) put(e(a));
      line += '\n';
      out << line;
    }
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

RunResult run_scenario(const Scenario& scenario, const RunConfig& cfg, bool keep_trace, bool true_init) {
  const EventQueue queue = make_queue(scenario.imu, scenario.slam, scenario.mocap,
                                      scenario.truth.layout->link_count());
  FusionEngine engine(scenario.truth.layout->model(), cfg);
  if (true_init) engine.set_initial_state(scenario.truth.nav_state(0));
  RunResult res;
  res.config = cfg;
  std::string reason;
  try {
    replay(engine, queue, cfg.pos_source);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDivergence) throw;
    reason = e.what();
  }
  if (!engine.trace().empty()) {
    res.metrics = compute_metrics(engine.trace(), scenario.truth);
  }
  if (!reason.empty()) {
    res.metrics.diverged = true;
    res.metrics.divergence_reason = reason;
  }
  if (engine.srukf_stats()) res.metrics.srukf = *engine.srukf_stats();
  if (keep_trace) res.trace = engine.trace();
  return res;
}

// ---------------------------------------------------------------------------

BatchSpec BatchSpec::standard(const ScenarioConfig& base, const RunConfig& run_base, int count) {
  static const std::pair<ScenarioKind, PathKind> kMatrix[] = {
      {ScenarioKind::kGait, PathKind::kOShape}, {ScenarioKind::kGait, PathKind::kStraight},
      {ScenarioKind::kJump, PathKind::kOShape}, {ScenarioKind::kGait, PathKind::kOShape},
      {ScenarioKind::kGait, PathKind::kStraight}, {ScenarioKind::kJump, PathKind::kStraight}};
  if (count <= 0) throw invalid_argument("batch needs at least one scenario");
  BatchSpec spec;
  for (int i = 0; i < count; ++i) {
    ScenarioConfig s = base;
    s.kind = kMatrix[i % 6].first;
    s.path = kMatrix[i % 6].second;
    s.seed = base.seed + static_cast<std::uint64_t>(i);
    spec.scenarios.push_back(s);
  }
  for (FilterKind f : {FilterKind::kEkf, FilterKind::kSrukf}) {
    for (PositionSource p : {PositionSource::kSlam, PositionSource::kMocap}) {
      RunConfig r = run_base;
      r.filter = f;
      r.pos_source = p;
      spec.variants.push_back(r);
    }
  }
  return spec;
}

BatchSpec BatchSpec::from_config(const KeyValueConfig& cfg) {
  const ScenarioConfig base = ScenarioConfig::from_config(cfg);
  const RunConfig run = RunConfig::from_config(cfg, base.imu_rate);
  BatchSpec spec = standard(base, run, cfg.get_int("batch_scenarios", 6));
  spec.workers = cfg.get_int("workers", 0);
  return spec;
}

BatchResult run_batch(const BatchSpec& spec) {
  const size_t ns = spec.scenarios.size(), nv = spec.variants.size();
  if (ns == 0 || nv == 0) throw invalid_argument("empty batch");
  int workers = spec.workers > 0 ? spec.workers : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, workers);

  auto pool = [workers](size_t tasks, auto&& fn) {
    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errors(tasks);
    auto work = [&] {
      for (size_t i = next++; i < tasks; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const size_t nthreads = std::min<size_t>(workers, tasks);
    std::vector<std::thread> threads;
    for (size_t t = 1; t < nthreads; ++t) threads.emplace_back(work);
    work();
    for (auto& th : threads) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  };

  std::vector<Scenario> scenarios(ns);
  pool(ns, [&](size_t i) { scenarios[i] = simulate(spec.scenarios[i]); });

  BatchResult out;
  out.spec = spec;
  out.metrics.assign(ns, std::vector<Metrics>(nv));
  pool(ns * nv, [&](size_t i) {
    const size_t s = i / nv, v = i % nv;
    out.metrics[s][v] = run_scenario(scenarios[s], spec.variants[v]).metrics;
  });
  return out;
}

namespace {

struct Summary {
  double mean = 0, sd = 0, min = 0, max = 0;
};

Summary summarize(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    for (double x : v) s.sd += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(s.sd / static_cast<double>(v.size() - 1));
  }
  return s;
}

}  // namespace

std::vector<double> BatchResult::mean_pos_rmse_cm() const {
  std::vector<double> out(spec.variants.size(), 0.0);
  for (size_t v = 0; v < out.size(); ++v) {
    for (const auto& row : metrics) out[v] += row[v].mean_pos_rmse_cm;
    out[v] /= static_cast<double>(metrics.size());
  }
  return out;
}

std::string BatchResult::aggregate_csv() const {
  std::ostringstream os;
  os << "variant,runs,diverged,pos_rmse_mean_cm,pos_rmse_sd_cm,pos_rmse_min_cm,pos_rmse_max_cm,"
        "att_rmse_mean_deg,att_rmse_sd_deg,att_rmse_min_deg,att_rmse_max_deg\n";
  for (size_t v = 0; v < spec.variants.size(); ++v) {
    std::vector<double> pos, att;
    int diverged = 0;
    for (const auto& row : metrics) {
      pos.push_back(row[v].mean_pos_rmse_cm);
      att.push_back(row[v].mean_att_rmse_deg);
      diverged += row[v].diverged ? 1 : 0;
    }
    const Summary p = summarize(pos), a = summarize(att);
    os << spec.variants[v].variant_name() << "," << metrics.size() << "," << diverged << "," << fmt(p.mean)
       << "," << fmt(p.sd) << "," << fmt(p.min) << "," << fmt(p.max) << "," << fmt(a.mean) << ","
       << fmt(a.sd) << "," << fmt(a.min) << "," << fmt(a.max) << "\n";
  }
  return os.str();
}

std::string BatchResult::runs_csv() const {
  std::ostringstream os;
  os << "scenario,kind,path,seed,variant,diverged,mean_pos_rmse_cm,mean_att_rmse_deg,segment_conv_s\n";
  for (size_t s = 0; s < metrics.size(); ++s) {
    const ScenarioConfig& sc = spec.scenarios[s];
    for (size_t v = 0; v < spec.variants.size(); ++v) {
      const Metrics& m = metrics[s][v];
      os << s << "," << to_string(sc.kind) << "," << to_string(sc.path) << "," << sc.seed << ","
         << spec.variants[v].variant_name() << "," << (m.diverged ? 1 : 0) << "," << fmt(m.mean_pos_rmse_cm)
         << "," << fmt(m.mean_att_rmse_deg) << "," << fmt(m.segment_conv_s()) << "\n";
    }
  }
  return os.str();
}

}  // namespace mocapfuse
