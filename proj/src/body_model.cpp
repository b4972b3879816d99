#include "mocapfuse/body_model.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "mocapfuse/error.hpp"
#include "mocapfuse/config.hpp"

namespace mocapfuse {

ChainModel ChainModel::human_arm() {
  ChainModel m;
  m.links = {{0, "scapula"}, {1, "upperarm"}, {2, "forearm"}};
  m.joints = {{0, 1, "shoulder"}, {1, 2, "elbow"}};
  m.camera_link = 0;
  return m;
}

void ChainModel::validate() const {
  const int n = link_count();
  if (n == 0) throw invalid_argument("chain has no links");
  for (int k = 0; k < n; ++k) {
    if (links[k].id != k) {
      throw invalid_argument("link ids must be 0..N-1 in declaration order");
    }
  }
  if (camera_link < 0 || camera_link >= n) {
    throw invalid_argument("camera link " + std::to_string(camera_link) + " does not exist");
  }
  std::set<std::pair<int, int>> seen;
  for (const auto& j : joints) {
    if (j.a < 0 || j.a >= n || j.b < 0 || j.b >= n) {
      throw invalid_argument("joint references a missing link");
    }
    if (j.a == j.b) throw invalid_argument("joint connects a link to itself");
    if (!seen.insert({std::min(j.a, j.b), std::max(j.a, j.b)}).second) {
      throw invalid_argument("duplicate joint between links " + std::to_string(j.a) + " and " +
                             std::to_string(j.b));
    }
  }
  // A tree on n nodes has n - 1 edges and is connected.
  if (static_cast<int>(joints.size()) != n - 1) {
    throw invalid_argument("joint graph must be a tree (expected " + std::to_string(n - 1) +
                           " joints, got " + std::to_string(joints.size()) + ")");
  }
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (const auto& j : joints) {
    const int ra = find(j.a), rb = find(j.b);
    if (ra == rb) throw invalid_argument("joint graph contains a cycle");
    parent[ra] = rb;
  }
  for (int k = 1; k < n; ++k) {
    if (find(k) != find(0)) throw invalid_argument("joint graph is disconnected");
  }
  if (!gravity_n.allFinite()) throw invalid_argument("gravity must be finite");
}

ChainModel ChainModel::from_config(const KeyValueConfig& cfg) {
  ChainModel m;
  const auto labels = cfg.get_list("links");
  for (size_t k = 0; k < labels.size(); ++k) {
    m.links.push_back({static_cast<int>(k), labels[k]});
  }
  const auto joint_labels = cfg.has("joint_labels") ? cfg.get_list("joint_labels")
                                                    : std::vector<std::string>{};
  const auto joints = cfg.has("joints") ? cfg.get_list("joints") : std::vector<std::string>{};
  for (size_t i = 0; i < joints.size(); ++i) {
    const auto& spec = joints[i];
    const auto dash = spec.find('-');
    if (dash == std::string::npos) {
      throw Error(ErrorCode::kParse, cfg.where("joints") + ": joint '" + spec +
                                         "' must be written as a-b");
    }
    JointSpec j;
    try {
      j.a = std::stoi(spec.substr(0, dash));
      j.b = std::stoi(spec.substr(dash + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParse, cfg.where("joints") + ": bad joint '" + spec + "'");
    }
    j.label = i < joint_labels.size() ? joint_labels[i] : spec;
    m.joints.push_back(j);
  }
  m.camera_link = cfg.get_int("camera_link", 0);
  m.gravity_n = cfg.get_vec3("gravity", m.gravity_n);
  m.validate();
  return m;
}

std::string ChainModel::to_config_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "links = ";
  for (size_t k = 0; k < links.size(); ++k) os << (k ? "," : "") << links[k].label;
  os << "\njoints = ";
  for (size_t i = 0; i < joints.size(); ++i) os << (i ? "," : "") << joints[i].a << "-" << joints[i].b;
  os << "\njoint_labels = ";
  for (size_t i = 0; i < joints.size(); ++i) os << (i ? "," : "") << joints[i].label;
  os << "\ncamera_link = " << camera_link;
  os << "\ngravity = " << gravity_n.x() << "," << gravity_n.y() << "," << gravity_n.z() << "\n";
  return os.str();
}

StateLayout::StateLayout(ChainModel model) : model_(std::move(model)) {
  model_.validate();
  int s = 0;
  int e = 0;
  for (int k = 0; k < model_.link_count(); ++k) {
    LinkSlots slots;
    slots.p = s;
    slots.v = s + 3;
    slots.q = s + 6;
    slots.ba = s + 10;
    slots.bg = s + 13;
    slots.dp = e;
    slots.dv = e + 3;
    slots.dphi = e + 6;
    slots.dba = e + 9;
    slots.dbg = e + 12;
    s += 16;
    e += 15;
    links_.push_back(slots);
    for (int j = 0; j < joint_count(); ++j) {
      const auto& joint = model_.joints[j];
      if (joint.a != k && joint.b != k) continue;
      SegmentSlot seg;
      seg.joint = j;
      seg.owner = k;
      seg.other = joint.a == k ? joint.b : joint.a;
      seg.state_offset = s;
      seg.error_offset = e;
      s += 3;
      e += 3;
      segments_.push_back(seg);
    }
  }
  lc_state_ = s;
  lc_error_ = e;
  state_dim_ = s + 3;
  error_dim_ = e + 3;
}

const SegmentSlot& StateLayout::segment(int joint, int owner) const {
  for (const auto& seg : segments_) {
    if (seg.joint == joint && seg.owner == owner) return seg;
  }
  throw invalid_argument("no segment for joint " + std::to_string(joint) + " owned by link " +
                         std::to_string(owner));
}

bool StateLayout::same_slices(const StateLayout& other) const {
  if (state_dim_ != other.state_dim_ || error_dim_ != other.error_dim_ ||
      lc_state_ != other.lc_state_ || lc_error_ != other.lc_error_ ||
      links_.size() != other.links_.size() || segments_.size() != other.segments_.size()) {
    return false;
  }
  for (size_t k = 0; k < links_.size(); ++k) {
    const auto& a = links_[k];
    const auto& b = other.links_[k];
    if (a.p != b.p || a.v != b.v || a.q != b.q || a.ba != b.ba || a.bg != b.bg || a.dp != b.dp ||
        a.dv != b.dv || a.dphi != b.dphi || a.dba != b.dba || a.dbg != b.dbg) {
      return false;
    }
  }
  for (size_t i = 0; i < segments_.size(); ++i) {
    const auto& a = segments_[i];
    const auto& b = other.segments_[i];
    if (a.joint != b.joint || a.owner != b.owner || a.other != b.other ||
        a.state_offset != b.state_offset || a.error_offset != b.error_offset) {
      return false;
    }
  }
  return true;
}

std::shared_ptr<const StateLayout> build_layout(const ChainModel& model) {
  return std::make_shared<const StateLayout>(model);
}

NavState::NavState(std::shared_ptr<const StateLayout> layout)
    : layout_(std::move(layout)), x_(Eigen::VectorXd::Zero(layout_->state_dim())) {
  for (int k = 0; k < layout_->link_count(); ++k) x_(layout_->link(k).q) = 1.0;
}

NavState inject_error(const NavState& x, const Eigen::VectorXd& e) {
  const StateLayout& lay = x.layout();
  if (e.size() != lay.error_dim()) {
    throw invalid_argument("error vector has " + std::to_string(e.size()) + " entries, expected " +
                           std::to_string(lay.error_dim()));
  }
  NavState out = x;
  for (int k = 0; k < lay.link_count(); ++k) {
    const LinkSlots& s = lay.link(k);
    out.set_p(k, x.p(k) + e.segment<3>(s.dp));
    out.set_v(k, x.v(k) + e.segment<3>(s.dv));
    out.set_q(k, quat_mul(rotvec_to_quat(Vec3(e.segment<3>(s.dphi))), x.q(k)));
    out.set_ba(k, x.ba(k) + e.segment<3>(s.dba));
    out.set_bg(k, x.bg(k) + e.segment<3>(s.dbg));
  }
  for (const auto& seg : lay.segments()) {
    out.set_segment(seg.joint, seg.owner,
                    x.segment(seg.joint, seg.owner) + e.segment<3>(seg.error_offset));
  }
  out.set_lc(x.lc() + e.segment<3>(lay.lc_error()));
  return out;
}

Eigen::VectorXd retract_error(const NavState& x, const NavState& x_ref) {
  const StateLayout& lay = x_ref.layout();
  if (x.layout_ptr() != x_ref.layout_ptr() &&
      (x.raw().size() != x_ref.raw().size() || !lay.same_slices(x.layout()))) {
    throw invalid_argument("retract_error: layouts differ");
  }
  Eigen::VectorXd e(lay.error_dim());
  for (int k = 0; k < lay.link_count(); ++k) {
    const LinkSlots& s = lay.link(k);
    e.segment<3>(s.dp) = x.p(k) - x_ref.p(k);
    e.segment<3>(s.dv) = x.v(k) - x_ref.v(k);
    e.segment<3>(s.dphi) = quat_to_rotvec(quat_mul(x.q(k), x_ref.q(k).conjugate()));
    e.segment<3>(s.dba) = x.ba(k) - x_ref.ba(k);
    e.segment<3>(s.dbg) = x.bg(k) - x_ref.bg(k);
  }
  for (const auto& seg : lay.segments()) {
    e.segment<3>(seg.error_offset) =
        x.segment(seg.joint, seg.owner) - x_ref.segment(seg.joint, seg.owner);
  }
  e.segment<3>(lay.lc_error()) = x.lc() - x_ref.lc();
  return e;
}

}  // namespace mocapfuse
