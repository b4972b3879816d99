#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mocapfuse/core_math.hpp"

namespace mocapfuse {

class KeyValueConfig;

struct LinkSpec {
  int id = 0;
  std::string label;
};

/// Ball-and-socket joint between links a and b.
struct JointSpec {
  int a = 0;
  int b = 0;
  std::string label;
};

/// Topology of an instrumented chain. Link ids are their positions in `links`.
struct ChainModel {
  std::vector<LinkSpec> links;
  std::vector<JointSpec> joints;
  int camera_link = 0;
  Vec3 gravity_n{0.0, 0.0, 9.81};  // NED, down-positive

  /// Scapula (0, camera) - shoulder - upper arm (1) - elbow - forearm (2).
  static ChainModel human_arm();

  int link_count() const { return static_cast<int>(links.size()); }

  /// Throws Error(kInvalidArgument) on a disconnected or cyclic joint graph,
  /// duplicate or self joints, or a missing camera link.
  void validate() const;

  static ChainModel from_config(const KeyValueConfig& cfg);
  std::string to_config_text() const;
};

/// State offsets (quaternion form) and error offsets (rotation-vector form) of one link.
struct LinkSlots {
  int p = 0, v = 0, q = 0, ba = 0, bg = 0;
  int dp = 0, dv = 0, dphi = 0, dba = 0, dbg = 0;
};

/// Lever arm from the owner link's IMU to a joint, expressed in the owner body frame.
struct SegmentSlot {
  int joint = 0;
  int owner = 0;
  int other = 0;
  int state_offset = 0;
  int error_offset = 0;
};

/// Flat index map for the augmented state and error vectors.
///
/// Ordering per link in id order: p, v, q, b_a, b_g, then the segments owned by
/// the link in joint-declaration order. The camera lever arm closes the vector.
class StateLayout {
 public:
  explicit StateLayout(ChainModel model);

  const ChainModel& model() const { return model_; }
  int link_count() const { return static_cast<int>(links_.size()); }
  int joint_count() const { return static_cast<int>(model_.joints.size()); }
  int state_dim() const { return state_dim_; }
  int error_dim() const { return error_dim_; }

  const LinkSlots& link(int k) const { return links_.at(k); }
  const std::vector<SegmentSlot>& segments() const { return segments_; }
  /// Segment owned by `owner` at joint index `joint` (l_{owner,other}).
  const SegmentSlot& segment(int joint, int owner) const;

  int lc_state() const { return lc_state_; }
  int lc_error() const { return lc_error_; }

  /// Number of time-varying error states (p, v, attitude per link).
  int motion_dim() const { return 9 * link_count(); }

  bool same_slices(const StateLayout& other) const;

 private:
  ChainModel model_;
  std::vector<LinkSlots> links_;
  std::vector<SegmentSlot> segments_;
  int lc_state_ = 0;
  int lc_error_ = 0;
  int state_dim_ = 0;
  int error_dim_ = 0;
};

std::shared_ptr<const StateLayout> build_layout(const ChainModel& model);

/// Full augmented estimate addressed through a StateLayout.
class NavState {
 public:
  explicit NavState(std::shared_ptr<const StateLayout> layout);

  const StateLayout& layout() const { return *layout_; }
  const std::shared_ptr<const StateLayout>& layout_ptr() const { return layout_; }

  const Eigen::VectorXd& raw() const { return x_; }

  Vec3 p(int k) const { return x_.segment<3>(layout_->link(k).p); }
  Vec3 v(int k) const { return x_.segment<3>(layout_->link(k).v); }
  UnitQuaternion q(int k) const { return UnitQuaternion(Vec4(x_.segment<4>(layout_->link(k).q))); }
  Dcm dcm(int k) const { return quat_to_dcm(q(k)); }
  Vec3 ba(int k) const { return x_.segment<3>(layout_->link(k).ba); }
  Vec3 bg(int k) const { return x_.segment<3>(layout_->link(k).bg); }
  Vec3 segment(int joint, int owner) const {
    return x_.segment<3>(layout_->segment(joint, owner).state_offset);
  }
  Vec3 lc() const { return x_.segment<3>(layout_->lc_state()); }

  void set_p(int k, const Vec3& p) { x_.segment<3>(layout_->link(k).p) = p; }
  void set_v(int k, const Vec3& v) { x_.segment<3>(layout_->link(k).v) = v; }
  void set_q(int k, const UnitQuaternion& q) { x_.segment<4>(layout_->link(k).q) = q.coeffs(); }
  void set_ba(int k, const Vec3& b) { x_.segment<3>(layout_->link(k).ba) = b; }
  void set_bg(int k, const Vec3& b) { x_.segment<3>(layout_->link(k).bg) = b; }
  void set_segment(int joint, int owner, const Vec3& l) {
    x_.segment<3>(layout_->segment(joint, owner).state_offset) = l;
  }
  void set_lc(const Vec3& l) { x_.segment<3>(layout_->lc_state()) = l; }

  bool all_finite() const { return x_.allFinite(); }

 private:
  std::shared_ptr<const StateLayout> layout_;
  Eigen::VectorXd x_;
};

/// x (+) e: additive on linear blocks, q <- exp(phi) (x) q on attitude blocks.
NavState inject_error(const NavState& x, const Eigen::VectorXd& e);

/// Inverse chart of inject_error: e such that inject_error(x_ref, e) == x.
Eigen::VectorXd retract_error(const NavState& x, const NavState& x_ref);

}  // namespace mocapfuse
