#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mocapfuse/ins.hpp"
#include "mocapfuse/measurements.hpp"
#include "mocapfuse/simulator.hpp"

namespace mocapfuse {

// Text records, one per line, comma separated, `#` starts a comment line.
//   IMU:        t,link_id,fx,fy,fz,wx,wy,wz
//   fixes:      t,px,py,pz,sigma
//   truth:      t,link,px,py,pz,vx,vy,vz,qw,qx,qy,qz,bax,bay,baz,bgx,bgy,bgz,stationary
// Floats are written with 17 significant digits so files round-trip exactly.

void write_imu(std::ostream& out, const std::vector<ImuSample>& samples);
void write_fixes(std::ostream& out, const std::vector<PositionFix>& fixes);
void write_truth(std::ostream& out, const GroundTruth& gt);

/// Throws Error(kParse) with "source:line" on malformed rows, per-link timestamp
/// regressions, or link ids outside [0, link_count) when link_count > 0.
std::vector<ImuSample> read_imu(std::istream& in, const std::string& source, int link_count = 0);
std::vector<PositionFix> read_fixes(std::istream& in, const std::string& source);
/// Reads truth rows plus the params text (segments, lever arm, chain).
GroundTruth read_truth(std::istream& rows, const std::string& source, const std::string& params_text);

std::vector<ImuSample> load_imu(const std::filesystem::path& path, int link_count = 0);
std::vector<PositionFix> load_fixes(const std::filesystem::path& path);

/// Geometry and chain of a truth record as key = value text.
std::string truth_params_text(const GroundTruth& gt);

struct ScenarioFiles {
  std::filesystem::path imu, slam, mocap, truth, truth_params, scenario;
  static ScenarioFiles in(const std::filesystem::path& dir);
};

/// Writes imu.csv, slam.csv, mocap.csv, truth.csv, truth_params.cfg and scenario.cfg.
ScenarioFiles write_scenario(const std::filesystem::path& dir, const Scenario& s);
GroundTruth load_truth(const std::filesystem::path& rows, const std::filesystem::path& params);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace mocapfuse
