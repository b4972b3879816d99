#include <set>

#include <gtest/gtest.h>

#include "mocapfuse/body_model.hpp"
#include "mocapfuse/config.hpp"
#include "mocapfuse/error.hpp"
#include "test_util.hpp"

using namespace mocapfuse;
using mftest::Rng;

namespace {

ChainModel single_link() {
  ChainModel m;
  m.links = {{0, "solo"}};
  return m;
}

ChainModel serial(int n) {
  ChainModel m;
  for (int k = 0; k < n; ++k) m.links.push_back({k, "l" + std::to_string(k)});
  for (int k = 0; k + 1 < n; ++k) m.joints.push_back({k, k + 1, "j" + std::to_string(k)});
  return m;
}

void expect_invalid(const ChainModel& m) {
  try {
    m.validate();
    FAIL() << "expected rejection";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

}  // namespace

TEST(StateLayout, ArmCensus) {
  const auto lay = mftest::arm_layout();
  EXPECT_EQ(lay->error_dim(), 60);
  EXPECT_EQ(lay->motion_dim(), 27);
  EXPECT_EQ(lay->error_dim() - lay->motion_dim(), 33);
  EXPECT_EQ(lay->state_dim(), 63);
  EXPECT_EQ(lay->state_dim() - lay->error_dim(), lay->link_count());
  EXPECT_EQ(lay->segments().size(), 4u);
}

TEST(StateLayout, SingleLinkCensus) {
  const StateLayout lay(single_link());
  EXPECT_EQ(lay.error_dim(), 18);
  EXPECT_EQ(lay.state_dim(), 19);
}

TEST(StateLayout, SlicesAreDisjointAndCover) {
  for (int n : {1, 2, 3, 5}) {
    const StateLayout lay(serial(n));
    std::vector<int> state_hits(lay.state_dim(), 0), error_hits(lay.error_dim(), 0);
    auto mark = [](std::vector<int>& hits, int off, int len) {
      for (int i = 0; i < len; ++i) ++hits.at(off + i);
    };
    for (int k = 0; k < n; ++k) {
      const LinkSlots& s = lay.link(k);
      mark(state_hits, s.p, 3);
      mark(state_hits, s.v, 3);
      mark(state_hits, s.q, 4);
      mark(state_hits, s.ba, 3);
      mark(state_hits, s.bg, 3);
      for (int off : {s.dp, s.dv, s.dphi, s.dba, s.dbg}) mark(error_hits, off, 3);
    }
    for (const auto& seg : lay.segments()) {
      mark(state_hits, seg.state_offset, 3);
      mark(error_hits, seg.error_offset, 3);
    }
    mark(state_hits, lay.lc_state(), 3);
    mark(error_hits, lay.lc_error(), 3);
    for (int h : state_hits) EXPECT_EQ(h, 1);
    for (int h : error_hits) EXPECT_EQ(h, 1);
  }
}

TEST(StateLayout, SegmentsFollowOwnerThenJointOrder) {
  const auto lay = mftest::arm_layout();
  const auto& segs = lay->segments();
  // Scapula owns l_01, upper arm owns l_10 and l_12, forearm owns l_21.
  ASSERT_EQ(segs.size(), 4u);
  EXPECT_EQ(segs[0].owner, 0);
  EXPECT_EQ(segs[0].other, 1);
  EXPECT_EQ(segs[1].owner, 1);
  EXPECT_EQ(segs[1].other, 0);
  EXPECT_EQ(segs[2].owner, 1);
  EXPECT_EQ(segs[2].other, 2);
  EXPECT_EQ(segs[3].owner, 2);
  EXPECT_EQ(segs[3].other, 1);
  EXPECT_LT(lay->link(0).p, segs[0].state_offset);
  EXPECT_LT(segs[0].state_offset, lay->link(1).p);
  EXPECT_THROW(lay->segment(0, 2), Error);
}

TEST(StateLayout, DeterministicBuild) {
  const StateLayout a(ChainModel::human_arm());
  const StateLayout b(ChainModel::human_arm());
  EXPECT_TRUE(a.same_slices(b));
  EXPECT_FALSE(a.same_slices(StateLayout(serial(2))));
}

TEST(ChainModel, RejectsMalformedGraphs) {
  ChainModel empty;
  expect_invalid(empty);

  ChainModel self = serial(2);
  self.joints = {{0, 0, "self"}};
  expect_invalid(self);

  ChainModel dup = serial(2);
  dup.joints.push_back({1, 0, "again"});
  expect_invalid(dup);

  ChainModel disconnected = serial(3);
  disconnected.joints.pop_back();
  expect_invalid(disconnected);

  ChainModel cycle = serial(3);
  cycle.joints.push_back({2, 0, "loop"});
  expect_invalid(cycle);

  ChainModel missing = serial(2);
  missing.joints[0].b = 5;
  expect_invalid(missing);

  ChainModel camera = serial(2);
  camera.camera_link = 7;
  expect_invalid(camera);

  EXPECT_NO_THROW(ChainModel::human_arm().validate());
}

TEST(ChainModel, ConfigRoundTrip) {
  const ChainModel m = ChainModel::human_arm();
  const ChainModel r = ChainModel::from_config(KeyValueConfig::parse_text(m.to_config_text()));
  ASSERT_EQ(r.links.size(), m.links.size());
  ASSERT_EQ(r.joints.size(), m.joints.size());
  for (size_t i = 0; i < m.joints.size(); ++i) {
    EXPECT_EQ(r.joints[i].a, m.joints[i].a);
    EXPECT_EQ(r.joints[i].b, m.joints[i].b);
  }
  EXPECT_EQ(r.camera_link, m.camera_link);
  EXPECT_TRUE(r.gravity_n.isApprox(m.gravity_n));
}

TEST(InjectError, ZeroIsIdentity) {
  Rng rng(1);
  const auto lay = mftest::arm_layout();
  const NavState x = rng.state(lay);
  const NavState y = inject_error(x, Eigen::VectorXd::Zero(lay->error_dim()));
  EXPECT_LT((x.raw() - y.raw()).norm(), 1e-15);
}

TEST(InjectError, PositionSliceOnlyMovesThatLink) {
  Rng rng(2);
  const auto lay = mftest::arm_layout();
  const NavState x = rng.state(lay);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(lay->error_dim());
  e.segment<3>(lay->link(1).dp) = Vec3(1, 2, 3);
  const NavState y = inject_error(x, e);
  Eigen::VectorXd d = y.raw() - x.raw();
  EXPECT_EQ(d.segment<3>(lay->link(1).p), Vec3(1, 2, 3));
  d.segment<3>(lay->link(1).p).setZero();
  EXPECT_LT(d.norm(), 1e-15);
}

TEST(InjectError, AttitudeIsLeftMultiplied) {
  Rng rng(3);
  const auto lay = mftest::arm_layout();
  const NavState x = rng.state(lay);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(lay->error_dim());
  e.segment<3>(lay->link(2).dphi) = Vec3(0.1, 0, 0);
  const NavState y = inject_error(x, e);
  const UnitQuaternion expect = quat_mul(rotvec_to_quat(Vec3(0.1, 0, 0)), x.q(2));
  EXPECT_LT(rotation_angle_between(y.q(2), expect), 1e-15);
  const Eigen::VectorXd back = retract_error(y, x);
  EXPECT_LT((back - e).norm(), 1e-14);
}

TEST(InjectError, RetractRoundTrip) {
  Rng rng(4);
  const auto lay = mftest::arm_layout();
  for (int n = 0; n < 1000; ++n) {
    const NavState x = rng.state(lay);
    Eigen::VectorXd e = rng.error(lay->error_dim(), 0.05);
    for (int k = 0; k < lay->link_count(); ++k) {
      Vec3 phi = e.segment<3>(lay->link(k).dphi);
      if (phi.norm() > 0.1) e.segment<3>(lay->link(k).dphi) = phi.normalized() * 0.1;
    }
    EXPECT_LT((retract_error(inject_error(x, e), x) - e).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(RetractError, SelfIsZero) {
  Rng rng(5);
  const auto lay = mftest::arm_layout();
  const NavState x = rng.state(lay);
  EXPECT_EQ(retract_error(x, x).norm(), 0.0);
}

TEST(InjectError, WrongSizeThrows) {
  const auto lay = mftest::arm_layout();
  const NavState x(lay);
  EXPECT_THROW(inject_error(x, Eigen::VectorXd::Zero(10)), Error);
}
