#pragma once

// Independent forward-kinematics oracle for cross-checking the production FK.
// Deliberately avoids the core geometry/dynamics code paths: plain 4x4 double
// array homogeneous transforms, Rodrigues joint rotations, nothing shared.

#include <array>
#include <cmath>

namespace fk_oracle {

using Mat4 = std::array<std::array<double, 4>, 4>;

inline Mat4 identity4() {
  Mat4 m{};
  for (int i = 0; i < 4; ++i) m[i][i] = 1.0;
  return m;
}

inline Mat4 mul(const Mat4& a, const Mat4& b) {
  Mat4 c{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat4 translation(double x, double y, double z) {
  Mat4 m = identity4();
  m[0][3] = x;
  m[1][3] = y;
  m[2][3] = z;
  return m;
}

// Rodrigues formula about a unit axis.
inline Mat4 axis_rotation(double ax, double ay, double az, double angle) {
  const double c = std::cos(angle), s = std::sin(angle), v = 1.0 - c;
  Mat4 m = identity4();
  m[0][0] = ax * ax * v + c;
  m[0][1] = ax * ay * v - az * s;
  m[0][2] = ax * az * v + ay * s;
  m[1][0] = ax * ay * v + az * s;
  m[1][1] = ay * ay * v + c;
  m[1][2] = ay * az * v - ax * s;
  m[2][0] = ax * az * v - ay * s;
  m[2][1] = ay * az * v + ax * s;
  m[2][2] = az * az * v + c;
  return m;
}

inline Mat4 rpy(double roll, double pitch, double yaw) {
  return mul(axis_rotation(0, 0, 1, yaw), mul(axis_rotation(0, 1, 0, pitch), axis_rotation(1, 0, 0, roll)));
}

struct JointDef {
  double tx, ty, tz;       // origin translation
  double rr, rp, ry;       // origin rpy
  double ax, ay, az;       // joint axis (child frame)
};

// Same published UR5 chain the model embeds, written down independently here.
inline const std::array<JointDef, 6>& ur5_chain() {
  static const std::array<JointDef, 6> chain = {{
      {0, 0, 0.089159, 0, 0, 0, 0, 0, 1},
      {0, 0.13585, 0, 0, M_PI / 2, 0, 0, 1, 0},
      {0, -0.1197, 0.425, 0, 0, 0, 0, 1, 0},
      {0, 0, 0.39225, 0, M_PI / 2, 0, 0, 1, 0},
      {0, 0.093, 0, 0, 0, 0, 0, 0, 1},
      {0, 0, 0.09465, 0, 0, 0, 0, 1, 0},
  }};
  return chain;
}

/// End-effector pose in the world frame given a base pose (as 4x4), the fixed
/// mount translation, joint angles, and the fixed ee offset.
inline Mat4 ur5_ee_pose(const Mat4& base, const std::array<double, 6>& q) {
  Mat4 t = mul(base, translation(0.0, -0.4, 0.6));
  for (int i = 0; i < 6; ++i) {
    const auto& j = ur5_chain()[i];
    t = mul(t, translation(j.tx, j.ty, j.tz));
    t = mul(t, rpy(j.rr, j.rp, j.ry));
    t = mul(t, axis_rotation(j.ax, j.ay, j.az, q[i]));
  }
  t = mul(t, translation(0.0, 0.0823, 0.0));
  t = mul(t, rpy(0, 0, M_PI / 2));
  return t;
}

}  // namespace fk_oracle
