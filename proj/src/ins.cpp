#include "mocapfuse/ins.hpp"

#include "mocapfuse/error.hpp"

namespace mocapfuse {

CorrectedImu correct_imu(const ImuSample& s, const Vec3& ba, const Vec3& bg) {
  return {s.f - ba, s.w - bg};
}

LinkKinematics propagate_link(const LinkKinematics& in, const Vec3& f_hat, const Vec3& w_hat,
                              double dt, const Vec3& gravity_n) {
  if (!(dt > 0.0)) throw invalid_argument("propagation step must be positive");
  if (dt > kMaxPropagationStep) throw invalid_argument("propagation step exceeds 0.1 s");
  const Vec3 a_n = quat_to_dcm(in.q) * f_hat + gravity_n;
  LinkKinematics out;
  out.p = in.p + in.v * dt + 0.5 * a_n * dt * dt;
  out.v = in.v + a_n * dt;
  out.q = quat_mul(in.q, rotvec_to_quat(Vec3(w_hat * dt)));
  return out;
}

void propagate_nav(NavState& x, std::span<const ImuSample> epoch, double dt) {
  const int n = x.layout().link_count();
  if (static_cast<int>(epoch.size()) != n) {
    throw invalid_argument("epoch must carry one IMU sample per link");
  }
  const Vec3& g = x.layout().model().gravity_n;
  for (int k = 0; k < n; ++k) {
    const CorrectedImu c = correct_imu(epoch[k], x.ba(k), x.bg(k));
    const LinkKinematics next = propagate_link({x.p(k), x.v(k), x.q(k)}, c.f, c.w, dt, g);
    x.set_p(k, next.p);
    x.set_v(k, next.v);
    x.set_q(k, next.q);
  }
}

}  // namespace mocapfuse
