#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "mocapfuse/body_model.hpp"
#include "mocapfuse/core_math.hpp"
#include "mocapfuse/ins.hpp"

namespace mftest {

using namespace mocapfuse;

struct Rng {
  std::mt19937_64 eng;
  std::normal_distribution<double> n01{0.0, 1.0};
  std::uniform_real_distribution<double> u01{0.0, 1.0};

  explicit Rng(std::uint64_t seed = 42) : eng(seed) {}

  double normal(double sd = 1.0) { return n01(eng) * sd; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(eng); }
  Vec3 vec(double sd = 1.0) { return Vec3(normal(sd), normal(sd), normal(sd)); }
  UnitQuaternion quat() { return UnitQuaternion(Vec4(normal(), normal(), normal(), normal())); }
  // Rotation vector with norm strictly below pi.
  Vec3 rotvec(double max_angle = 3.1) {
    Vec3 axis = vec().normalized();
    return axis * uniform(0.0, max_angle);
  }

  NavState state(const std::shared_ptr<const StateLayout>& layout) {
    NavState x(layout);
    for (int k = 0; k < layout->link_count(); ++k) {
      x.set_p(k, vec(3.0));
      x.set_v(k, vec(1.0));
      x.set_q(k, quat());
      x.set_ba(k, vec(0.1));
      x.set_bg(k, vec(0.01));
    }
    for (const auto& s : layout->segments()) x.set_segment(s.joint, s.owner, vec(0.2));
    x.set_lc(vec(0.1));
    return x;
  }

  Eigen::VectorXd error(int n, double sd) {
    Eigen::VectorXd e(n);
    for (int i = 0; i < n; ++i) e(i) = normal(sd);
    return e;
  }
};

inline std::shared_ptr<const StateLayout> arm_layout() { return build_layout(ChainModel::human_arm()); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mocapfuse_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace mftest
