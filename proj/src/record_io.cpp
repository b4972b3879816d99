#include "mocapfuse/record_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "mocapfuse/config.hpp"
#include "mocapfuse/error.hpp"

namespace mocapfuse {

namespace {

void put(std::string& line, double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  line.append(buf, n);
}

void put_vec(std::string& line, const Vec3& v) {
  for (int a = 0; a < 3; ++a) {
    line += ',';
    put(line, v(a));
  }
}


// Splits on commas; returns false for blank and comment lines.
bool split_row(std::string_view line, std::vector<std::string_view>& cells) {
  cells.clear();
  while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
  size_t b = line.find_first_not_of(" \t");
  if (b == std::string_view::npos || line[b] == '#') return false;
  line.remove_prefix(b);
  size_t start = 0;
  for (;;) {
    const size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? comma : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
    cells.push_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return true;
}

std::string at(const std::string& source, long line) { return source + ":" + std::to_string(line); }

double number(std::string_view cell, const std::string& source, long line) {
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || cell.empty()) {
    throw Error(ErrorCode::kParse, at(source, line) + ": bad number '" + std::string(cell) + "'");
  }
  if (!std::isfinite(v)) throw Error(ErrorCode::kParse, at(source, line) + ": non-finite value");
  return v;
}

int integer(std::string_view cell, const std::string& source, long line) {
  int v = 0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || cell.empty()) {
    throw Error(ErrorCode::kParse, at(source, line) + ": bad integer '" + std::string(cell) + "'");
  }
  return v;
}

void expect_columns(const std::vector<std::string_view>& cells, size_t n, const std::string& source,
                    long line) {
  if (cells.size() != n) {
    throw Error(ErrorCode::kParse, at(source, line) + ": expected " + std::to_string(n) +
                                       " columns, got " + std::to_string(cells.size()));
  }
}

Vec3 vec_at(const std::vector<std::string_view>& c, size_t i, const std::string& source, long line) {
  return {number(c[i], source, line), number(c[i + 1], source, line), number(c[i + 2], source, line)};
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return in;
}

}  // namespace

void write_imu(std::ostream& out, const std::vector<ImuSample>& samples) {
  out << "# t,link_id,fx,fy,fz,wx,wy,wz\n";
  std::string line;
  for (const auto& s : samples) {
    line.clear();
    put(line, s.t);
    line += ',' + std::to_string(s.link);
    put_vec(line, s.f);
    put_vec(line, s.w);
    line += '\n';
    out << line;
  }
}

void write_fixes(std::ostream& out, const std::vector<PositionFix>& fixes) {
  out << "# t,px,py,pz,sigma\n";
  std::string line;
  for (const auto& f : fixes) {
    line.clear();
    put(line, f.t);
    put_vec(line, f.p);
    line += ',';
    put(line, f.sigma);
    line += '\n';
    out << line;
  }
}

void write_truth(std::ostream& out, const GroundTruth& gt) {
  out << "# t,link,px,py,pz,vx,vy,vz,qw,qx,qy,qz,bax,bay,baz,bgx,bgy,bgz,stationary\n";
  std::string line;
  for (const auto& e : gt.epochs) {
    for (size_t k = 0; k < e.links.size(); ++k) {
      line.clear();
      put(line, e.t);
      line += ',' + std::to_string(k);
      put_vec(line, e.links[k].p);
      put_vec(line, e.links[k].v);
      const Vec4 q = e.links[k].q.coeffs();
      for (int a = 0; a < 4; ++a) {
        line += ',';
        put(line, q(a));
      }
      put_vec(line, e.accel_bias[k]);
      put_vec(line, e.gyro_bias[k]);
      line += e.stationary[k] ? ",1\n" : ",0\n";
      out << line;
    }
  }
}

std::vector<ImuSample> read_imu(std::istream& in, const std::string& source, int link_count) {
  std::vector<ImuSample> out;
  std::map<int, double> last_t;
  std::vector<std::string_view> cells;
  std::string text;
  long lineno = 0;
  while (std::getline(in, text)) {
    ++lineno;
    if (!split_row(text, cells)) continue;
    expect_columns(cells, 8, source, lineno);
    ImuSample s;
    s.t = number(cells[0], source, lineno);
    s.link = integer(cells[1], source, lineno);
    if (s.link < 0 || (link_count > 0 && s.link >= link_count)) {
      throw Error(ErrorCode::kParse, at(source, lineno) + ": unknown link id " + std::to_string(s.link));
    }
    s.f = vec_at(cells, 2, source, lineno);
    s.w = vec_at(cells, 5, source, lineno);
    const auto it = last_t.find(s.link);
    if (it != last_t.end() && !(s.t > it->second)) {
      throw Error(ErrorCode::kParse, at(source, lineno) + ": timestamp regression on link " +
                                         std::to_string(s.link));
    }
    last_t[s.link] = s.t;
    out.push_back(s);
  }
  return out;
}

std::vector<PositionFix> read_fixes(std::istream& in, const std::string& source) {
  std::vector<PositionFix> out;
  std::vector<std::string_view> cells;
  std::string text;
  long lineno = 0;
  while (std::getline(in, text)) {
    ++lineno;
    if (!split_row(text, cells)) continue;
    expect_columns(cells, 5, source, lineno);
    PositionFix f;
    f.t = number(cells[0], source, lineno);
    f.p = vec_at(cells, 1, source, lineno);
    f.sigma = number(cells[4], source, lineno);
    if (!(f.sigma > 0.0)) throw Error(ErrorCode::kParse, at(source, lineno) + ": sigma must be positive");
    if (!out.empty() && !(f.t > out.back().t)) {
      throw Error(ErrorCode::kParse, at(source, lineno) + ": timestamp regression");
    }
    out.push_back(f);
  }
  return out;
}

std::string truth_params_text(const GroundTruth& gt) {
  std::ostringstream os;
  os << gt.layout->model().to_config_text();
  os << "dt = " << format_double(gt.dt) << "\n";
  os << "lever_arm = " << format_vec3(gt.lever_arm) << "\n";
  for (size_t i = 0; i < gt.segments.size(); ++i) {
    const auto& seg = gt.layout->segments()[i];
    os << "segment." << seg.joint << "." << seg.owner << " = " << format_vec3(gt.segments[i]) << "\n";
  }
  return os.str();
}

GroundTruth read_truth(std::istream& rows, const std::string& source, const std::string& params_text) {
  const KeyValueConfig params = KeyValueConfig::parse_text(params_text, source + " params");
  GroundTruth gt;
  gt.layout = build_layout(ChainModel::from_config(params));
  gt.dt = params.get_double("dt", gt.dt);
  gt.lever_arm = params.get_vec3("lever_arm", Vec3::Zero());
  for (const auto& seg : gt.layout->segments()) {
    const std::string key = "segment." + std::to_string(seg.joint) + "." + std::to_string(seg.owner);
    if (!params.has(key)) throw Error(ErrorCode::kParse, source + " params: missing " + key);
    gt.segments.push_back(params.get_vec3(key, Vec3::Zero()));
  }
  const int n = gt.layout->link_count();
  std::vector<std::string_view> cells;
  std::string text;
  long lineno = 0;
  while (std::getline(rows, text)) {
    ++lineno;
    if (!split_row(text, cells)) continue;
    expect_columns(cells, 19, source, lineno);
    const double t = number(cells[0], source, lineno);
    const int k = integer(cells[1], source, lineno);
    if (k < 0 || k >= n) throw Error(ErrorCode::kParse, at(source, lineno) + ": unknown link id");
    if (k == 0) {
      if (!gt.epochs.empty() && !(t > gt.epochs.back().t)) {
        throw Error(ErrorCode::kParse, at(source, lineno) + ": timestamp regression");
      }
      TruthEpoch e;
      e.t = t;
      e.links.resize(n);
      e.accel_bias.resize(n);
      e.gyro_bias.resize(n);
      e.stationary.resize(n);
      gt.epochs.push_back(std::move(e));
    } else if (gt.epochs.empty() || gt.epochs.back().t != t) {
      throw Error(ErrorCode::kParse, at(source, lineno) + ": links of an epoch must follow link 0");
    }
    TruthEpoch& e = gt.epochs.back();
    e.links[k].p = vec_at(cells, 2, source, lineno);
    e.links[k].v = vec_at(cells, 5, source, lineno);
    e.links[k].q = UnitQuaternion(Vec4(number(cells[8], source, lineno), number(cells[9], source, lineno),
                                       number(cells[10], source, lineno), number(cells[11], source, lineno)));
    e.accel_bias[k] = vec_at(cells, 12, source, lineno);
    e.gyro_bias[k] = vec_at(cells, 15, source, lineno);
    e.stationary[k] = integer(cells[18], source, lineno) != 0;
  }
  if (gt.epochs.empty()) throw Error(ErrorCode::kParse, source + ": no truth rows");
  return gt;
}

std::vector<ImuSample> load_imu(const std::filesystem::path& path, int link_count) {
  auto in = open_in(path);
  return read_imu(in, path.string(), link_count);
}

std::vector<PositionFix> load_fixes(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_fixes(in, path.string());
}

GroundTruth load_truth(const std::filesystem::path& rows, const std::filesystem::path& params) {
  auto pin = open_in(params);
  std::stringstream ptext;
  ptext << pin.rdbuf();
  auto in = open_in(rows);
  return read_truth(in, rows.string(), ptext.str());
}

ScenarioFiles ScenarioFiles::in(const std::filesystem::path& dir) {
  return {dir / "imu.csv", dir / "slam.csv", dir / "mocap.csv",
          dir / "truth.csv", dir / "truth_params.cfg", dir / "scenario.cfg"};
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

ScenarioFiles write_scenario(const std::filesystem::path& dir, const Scenario& s) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  const ScenarioFiles f = ScenarioFiles::in(dir);
  auto write_with = [](const std::filesystem::path& p, auto&& fn) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + p.string());
    fn(out);
    if (!out) throw Error(ErrorCode::kIo, "write failed for " + p.string());
  };
  write_with(f.imu, [&](std::ostream& o) { write_imu(o, s.imu); });
  write_with(f.slam, [&](std::ostream& o) { write_fixes(o, s.slam); });
  write_with(f.mocap, [&](std::ostream& o) { write_fixes(o, s.mocap); });
  write_with(f.truth, [&](std::ostream& o) { write_truth(o, s.truth); });
  write_text_file(f.truth_params, truth_params_text(s.truth));
  write_text_file(f.scenario, s.config.to_config_text());
  return f;
}

}  // namespace mocapfuse
