#include "freeflyer/model.hpp"

#include <Eigen/Eigenvalues>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "freeflyer/errors.hpp"
#include "freeflyer/rng.hpp"

namespace ff {

double SystemModel::total_mass() const {
  double m = base.mass;
  for (const auto& l : links) m += l.body.mass;
  return m;
}

namespace {

Mat3 diag_inertia(double xx, double yy, double zz) {
  Mat3 m = Mat3::Zero();
  m(0, 0) = xx;
  m(1, 1) = yy;
  m(2, 2) = zz;
  return m;
}

LinkParams make_link(const Vec3& origin_t, const EulerZYX& origin_rpy, const Vec3& axis,
                     double mass, const Vec3& com, const Mat3& inertia, double angle_lim,
                     double vel_lim) {
  LinkParams l;
  l.origin = {matrix_from_euler_zyx(origin_rpy), origin_t};
  l.axis = axis;
  l.body = {mass, inertia, com};
  l.angle_min = -angle_lim;
  l.angle_max = angle_lim;
  l.velocity_limit = vel_lim;
  return l;
}

constexpr double kHalfPi = 1.5707963267948966;
constexpr double kTwoPi = 6.283185307179586;

}  // namespace

SystemModel default_system_model() {
  SystemModel m;
  m.name = "base100_ur5";
  m.base.mass = 100.0;
  m.base.inertia = diag_inertia(41.6, 52.9, 52.9);
  m.base.com_offset = Vec3::Zero();
  m.base_torque_limit = 0.1;
  m.mount = {Mat3::Identity(), Vec3(0.0, -0.4, 0.6)};

  // UR5 chain, ur_description joint origins / inertials.
  m.links[0] = make_link({0, 0, 0.089159}, {0, 0, 0}, Vec3::UnitZ(), 3.7,
                         {0, 0, 0}, diag_inertia(0.010267495893, 0.010267495893, 0.00666),
                         kTwoPi, 2.0);
  m.links[1] = make_link({0, 0.13585, 0}, {0, kHalfPi, 0}, Vec3::UnitY(), 8.393,
                         {0, 0, 0.28}, diag_inertia(0.22689067591, 0.22689067591, 0.0151074),
                         kTwoPi, 2.0);
  m.links[2] = make_link({0, -0.1197, 0.425}, {0, 0, 0}, Vec3::UnitY(), 2.275,
                         {0, 0, 0.25}, diag_inertia(0.049443313556, 0.049443313556, 0.004095),
                         kTwoPi, 2.0);
  m.links[3] = make_link({0, 0, 0.39225}, {0, kHalfPi, 0}, Vec3::UnitY(), 1.219,
                         {0, 0, 0}, diag_inertia(0.111172755531, 0.111172755531, 0.21942),
                         M_PI, 2.0);
  m.links[4] = make_link({0, 0.093, 0}, {0, 0, 0}, Vec3::UnitZ(), 1.219,
                         {0, 0, 0}, diag_inertia(0.111172755531, 0.111172755531, 0.21942),
                         M_PI, 2.0);
  m.links[5] = make_link({0, 0, 0.09465}, {0, 0, 0}, Vec3::UnitY(), 0.1879,
                         {0, 0, 0}, diag_inertia(0.0171364731454, 0.0171364731454, 0.033822),
                         M_PI, 2.0);
  m.ee_offset = {matrix_from_euler_zyx({0, 0, kHalfPi}), Vec3(0, 0.0823, 0)};
  return m;
}

namespace {

std::string fmt_num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt_vec3(const Vec3& v) {
  return fmt_num(v.x()) + " " + fmt_num(v.y()) + " " + fmt_num(v.z());
}

// inertia serialized as the 6 unique entries xx yy zz xy xz yz
std::string fmt_inertia(const Mat3& i) {
  return fmt_num(i(0, 0)) + " " + fmt_num(i(1, 1)) + " " + fmt_num(i(2, 2)) + " " +
         fmt_num(i(0, 1)) + " " + fmt_num(i(0, 2)) + " " + fmt_num(i(1, 2));
}

std::string fmt_rotation(const Mat3& r) {
  const UnitQuaternion q = matrix_to_quat(r);
  return fmt_num(q.w) + " " + fmt_num(q.x) + " " + fmt_num(q.y) + " " + fmt_num(q.z);
}

void emit(std::ostringstream& os, const std::string& key, const std::string& value) {
  os << key << " = " << value << "\n";
}

std::string body_text(const SystemModel& m) {
  std::ostringstream os;
  emit(os, "format_version", "1");
  emit(os, "name", m.name);
  emit(os, "base.mass", fmt_num(m.base.mass));
  emit(os, "base.com", fmt_vec3(m.base.com_offset));
  emit(os, "base.inertia", fmt_inertia(m.base.inertia));
  emit(os, "base.torque_limit", fmt_num(m.base_torque_limit));
  emit(os, "mount.translation", fmt_vec3(m.mount.translation));
  emit(os, "mount.rotation", fmt_rotation(m.mount.rotation));
  for (int i = 0; i < 6; ++i) {
    const auto& l = m.links[i];
    const std::string p = "link" + std::to_string(i + 1);
    emit(os, p + ".origin.translation", fmt_vec3(l.origin.translation));
    emit(os, p + ".origin.rotation", fmt_rotation(l.origin.rotation));
    emit(os, p + ".axis", fmt_vec3(l.axis));
    emit(os, p + ".mass", fmt_num(l.body.mass));
    emit(os, p + ".com", fmt_vec3(l.body.com_offset));
    emit(os, p + ".inertia", fmt_inertia(l.body.inertia));
    emit(os, p + ".angle_limit", fmt_num(l.angle_min) + " " + fmt_num(l.angle_max));
    emit(os, p + ".velocity_limit", fmt_num(l.velocity_limit));
  }
  emit(os, "ee.translation", fmt_vec3(m.ee_offset.translation));
  emit(os, "ee.rotation", fmt_rotation(m.ee_offset.rotation));
  return os.str();
}

std::vector<double> parse_nums(const std::string& s, std::size_t expect, const std::string& key) {
  std::istringstream is(s);
  std::vector<double> out;
  double v;
  while (is >> v) out.push_back(v);
  if (out.size() != expect) {
    throw ConfigError("model key '" + key + "': expected " + std::to_string(expect) +
                      " numbers, got " + std::to_string(out.size()));
  }
  return out;
}

Vec3 parse_vec3(const std::string& s, const std::string& key) {
  auto v = parse_nums(s, 3, key);
  return {v[0], v[1], v[2]};
}

Mat3 parse_inertia(const std::string& s, const std::string& key) {
  auto v = parse_nums(s, 6, key);
  Mat3 m;
  m << v[0], v[3], v[4],
       v[3], v[1], v[5],
       v[4], v[5], v[2];
  return m;
}

Mat3 parse_rotation(const std::string& s, const std::string& key) {
  auto v = parse_nums(s, 4, key);
  return UnitQuaternion(v[0], v[1], v[2], v[3]).to_matrix();
}

}  // namespace

std::uint64_t model_checksum(const SystemModel& m) { return fnv1a64(body_text(m)); }

std::string serialize_model(const SystemModel& m) {
  const std::string body = body_text(m);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(body)));
  return body + "checksum = " + buf + "\n";
}

SystemModel parse_model(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::string body_without_checksum;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::string stripped = line;
    if (auto pos = stripped.find('#'); pos != std::string::npos) stripped.resize(pos);
    if (stripped.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) throw ConfigError("model file: malformed line '" + line + "'");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (!kv.emplace(key, value).second) throw ConfigError("model file: duplicate key '" + key + "'");
    if (key != "checksum") body_without_checksum += key + " = " + value + "\n";
  }

  auto take = [&kv](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("model file: missing key '" + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  SystemModel m;
  if (take("format_version") != "1") throw ConfigError("model file: unsupported format_version");
  m.name = take("name");
  m.base.mass = parse_nums(take("base.mass"), 1, "base.mass")[0];
  m.base.com_offset = parse_vec3(take("base.com"), "base.com");
  m.base.inertia = parse_inertia(take("base.inertia"), "base.inertia");
  m.base_torque_limit = parse_nums(take("base.torque_limit"), 1, "base.torque_limit")[0];
  m.mount = {parse_rotation(take("mount.rotation"), "mount.rotation"),
             parse_vec3(take("mount.translation"), "mount.translation")};
  for (int i = 0; i < 6; ++i) {
    const std::string p = "link" + std::to_string(i + 1);
    auto& l = m.links[i];
    l.origin = {parse_rotation(take(p + ".origin.rotation"), p),
                parse_vec3(take(p + ".origin.translation"), p)};
    l.axis = parse_vec3(take(p + ".axis"), p);
    l.body.mass = parse_nums(take(p + ".mass"), 1, p)[0];
    l.body.com_offset = parse_vec3(take(p + ".com"), p);
    l.body.inertia = parse_inertia(take(p + ".inertia"), p);
    const auto lim = parse_nums(take(p + ".angle_limit"), 2, p);
    l.angle_min = lim[0];
    l.angle_max = lim[1];
    l.velocity_limit = parse_nums(take(p + ".velocity_limit"), 1, p)[0];
  }
  m.ee_offset = {parse_rotation(take("ee.rotation"), "ee.rotation"),
                 parse_vec3(take("ee.translation"), "ee.translation")};

  const std::string checksum = take("checksum");
  for (const auto& [key, _] : kv) throw ConfigError("model file: unknown key '" + key + "'");

  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(body_without_checksum)));
  if (checksum != buf) {
    throw ConfigError("model file: checksum mismatch (expected " + std::string(buf) +
                      ", file says " + checksum + ")");
  }

  // physical validity
  if (m.base.mass <= 0) throw ConfigError("model file: base mass must be positive");
  for (int i = 0; i < 6; ++i) {
    auto& l = m.links[i];
    if (l.body.mass <= 0) throw ConfigError("model file: link mass must be positive");
    if (std::abs(l.axis.norm() - 1.0) > 1e-9) throw ConfigError("model file: joint axis must be unit");
    if (l.angle_min >= l.angle_max) throw ConfigError("model file: bad angle limits");
    if (l.velocity_limit <= 0) throw ConfigError("model file: bad velocity limit");
    Eigen::SelfAdjointEigenSolver<Mat3> es(l.body.inertia);
    if (es.eigenvalues().minCoeff() <= 0) throw ConfigError("model file: inertia not positive definite");
  }
  return m;
}

SystemModel load_model_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open model file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_model(ss.str());
}

void save_model_file(const SystemModel& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write model file: " + path);
  f << serialize_model(m);
}

}  // namespace ff
