#include "freeflyer/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "freeflyer/rng.hpp"

namespace ff {

namespace {
constexpr double kGimbalTol = 1e-6;
}

UnitQuaternion::UnitQuaternion(double w_, double x_, double y_, double z_)
    : w(w_), x(x_), y(y_), z(z_) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  w /= n;
  x /= n;
  y /= n;
  z /= n;
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double angle) {
  const Vec3 a = axis.normalized();
  const double h = 0.5 * angle;
  const double s = std::sin(h);
  return {std::cos(h), s * a.x(), s * a.y(), s * a.z()};
}

UnitQuaternion UnitQuaternion::exp_rotation(const Vec3& rv) {
  const double angle = rv.norm();
  if (angle < 1e-12) {
    // second-order series keeps the small-step integration exact to rounding
    return {1.0 - angle * angle / 8.0, 0.5 * rv.x(), 0.5 * rv.y(), 0.5 * rv.z()};
  }
  return from_axis_angle(rv / angle, angle);
}

UnitQuaternion UnitQuaternion::operator*(const UnitQuaternion& r) const {
  return {w * r.w - x * r.x - y * r.y - z * r.z,
          w * r.x + x * r.w + y * r.z - z * r.y,
          w * r.y - x * r.z + y * r.w + z * r.x,
          w * r.z + x * r.y - y * r.x + z * r.w};
}

Vec3 UnitQuaternion::rotate(const Vec3& v) const { return to_matrix() * v; }

Mat3 UnitQuaternion::to_matrix() const { return quat_to_matrix(*this); }

double UnitQuaternion::norm_error() const {
  return std::abs(std::sqrt(w * w + x * x + y * y + z * z) - 1.0);
}

UnitQuaternion UnitQuaternion::from_matrix(const Mat3& r) { return matrix_to_quat(r); }

Mat3 quat_to_matrix(const UnitQuaternion& q) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

UnitQuaternion matrix_to_quat(const Mat3& r) {
  // Shepperd's method: pick the largest pivot for numerical stability.
  const double t = r.trace();
  double w, x, y, z;
  if (t > 0.0) {
    double s = std::sqrt(t + 1.0) * 2.0;
    w = 0.25 * s;
    x = (r(2, 1) - r(1, 2)) / s;
    y = (r(0, 2) - r(2, 0)) / s;
    z = (r(1, 0) - r(0, 1)) / s;
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
    w = (r(2, 1) - r(1, 2)) / s;
    x = 0.25 * s;
    y = (r(0, 1) + r(1, 0)) / s;
    z = (r(0, 2) + r(2, 0)) / s;
  } else if (r(1, 1) > r(2, 2)) {
    double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
    w = (r(0, 2) - r(2, 0)) / s;
    x = (r(0, 1) + r(1, 0)) / s;
    y = 0.25 * s;
    z = (r(1, 2) + r(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
    w = (r(1, 0) - r(0, 1)) / s;
    x = (r(0, 2) + r(2, 0)) / s;
    y = (r(1, 2) + r(2, 1)) / s;
    z = 0.25 * s;
  }
  return {w, x, y, z};
}

double EulerZYX::l1_norm() const { return std::abs(roll) + std::abs(pitch) + std::abs(yaw); }

EulerZYX euler_zyx_from_matrix(const Mat3& r) {
  const double sp = std::clamp(-r(2, 0), -1.0, 1.0);
  const double pitch = std::asin(sp);
  if (M_PI / 2.0 - std::abs(pitch) < kGimbalTol) {
    throw GimbalLockError(pitch);
  }
  return {std::atan2(r(2, 1), r(2, 2)), pitch, std::atan2(r(1, 0), r(0, 0))};
}

Mat3 matrix_from_euler_zyx(const EulerZYX& e) {
  const double cr = std::cos(e.roll), sr = std::sin(e.roll);
  const double cp = std::cos(e.pitch), sp = std::sin(e.pitch);
  const double cy = std::cos(e.yaw), sy = std::sin(e.yaw);
  Mat3 r;
  r << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
       sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
       -sp, cp * sr, cp * cr;
  return r;
}

double geodesic_angle(const Mat3& ra, const Mat3& rb) {
  const double c = std::clamp(((ra.transpose() * rb).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

Vec3 rotation_log(const Mat3& r) {
  const double angle = geodesic_angle(Mat3::Identity(), r);
  if (angle < 1e-10) return Vec3::Zero();
  if (angle > M_PI - 1e-6) {
    // near pi the skew part degenerates; recover the axis from the symmetric part
    const Mat3 s = 0.5 * (r + Mat3::Identity());
    Vec3 axis(std::sqrt(std::max(s(0, 0), 0.0)), std::sqrt(std::max(s(1, 1), 0.0)),
              std::sqrt(std::max(s(2, 2), 0.0)));
    int k = 0;
    axis.cwiseAbs().maxCoeff(&k);
    if (axis[k] > 0) {
      for (int i = 0; i < 3; ++i) {
        if (i != k && s(k, i) < 0.0) axis[i] = -axis[i];
      }
    }
    return angle * axis.normalized();
  }
  const Vec3 v(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return (angle / (2.0 * std::sin(angle))) * v;
}

Rot6d rot6d_encode(const Mat3& r) {
  Rot6d v;
  v << r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1);
  return v;
}

Mat3 rot6d_decode(const Rot6d& v) {
  Vec3 c0 = v.head<3>().normalized();
  Vec3 c1 = v.tail<3>();
  c1 = (c1 - c0.dot(c1) * c0).normalized();
  Mat3 r;
  r.col(0) = c0;
  r.col(1) = c1;
  r.col(2) = c0.cross(c1);
  return r;
}

Cpr cpr_encode(const Pose& p) {
  Cpr v;
  v.head<3>() = p.translation;
  v.tail<6>() = rot6d_encode(p.rotation);
  return v;
}

Pose cpr_decode(const Cpr& v) { return {rot6d_decode(v.tail<6>()), v.head<3>()}; }

double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a <= 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(),
       v.z(), 0, -v.x(),
       -v.y(), v.x(), 0;
  return s;
}

UnitQuaternion random_rotation(Rng& rng) {
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  return {a * std::sin(2 * M_PI * u2), a * std::cos(2 * M_PI * u2),
          b * std::sin(2 * M_PI * u3), b * std::cos(2 * M_PI * u3)};
}

}  // namespace ff
