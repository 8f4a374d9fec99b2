#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "freeflyer/errors.hpp"

namespace ff {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

using Rot6d = Eigen::Matrix<double, 6, 1>;
using Cpr = Eigen::Matrix<double, 9, 1>;

class Rng;

/// Unit quaternion (w, x, y, z), renormalized on construction and after integration.
struct UnitQuaternion {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  UnitQuaternion() = default;
  UnitQuaternion(double w_, double x_, double y_, double z_);

  static UnitQuaternion identity() { return {}; }
  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle);
  static UnitQuaternion from_matrix(const Mat3& r);
  /// exp of the pure rotation vector w*dt (used for attitude integration).
  static UnitQuaternion exp_rotation(const Vec3& rotation_vector);

  UnitQuaternion operator*(const UnitQuaternion& rhs) const;
  UnitQuaternion conjugate() const { return {w, -x, -y, -z}; }
  Vec3 rotate(const Vec3& v) const;
  Mat3 to_matrix() const;

  double norm_error() const;
};

Mat3 quat_to_matrix(const UnitQuaternion& q);
UnitQuaternion matrix_to_quat(const Mat3& r);

/// Z-Y-X Euler angles: R = Rz(yaw) * Ry(pitch) * Rx(roll).
/// Component order is (roll about x, pitch about y, yaw about z).
struct EulerZYX {
  double roll = 0.0, pitch = 0.0, yaw = 0.0;

  Vec3 vec() const { return {roll, pitch, yaw}; }
  double l1_norm() const;
};

/// Throws GimbalLockError when |pitch| is within 1e-6 of pi/2.
EulerZYX euler_zyx_from_matrix(const Mat3& r);
Mat3 matrix_from_euler_zyx(const EulerZYX& e);

/// Rigid transform: x_world = rotation * x_local + translation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  Pose operator*(const Pose& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }
  Pose inverse() const {
    Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

/// Rotation distance arccos((trace(Ra^T Rb) - 1)/2), clamped into [0, pi].
double geodesic_angle(const Mat3& ra, const Mat3& rb);

/// Axis-angle vector of a rotation (matrix logarithm), |result| in [0, pi].
Vec3 rotation_log(const Mat3& r);

/// First two columns of the rotation matrix, column-major.
Rot6d rot6d_encode(const Mat3& r);
/// Gram-Schmidt decode; tolerant to small perturbations of the encoding.
Mat3 rot6d_decode(const Rot6d& v);

/// 9-dim continuous pose encoding: [translation; first rotation column; second column].
Cpr cpr_encode(const Pose& p);
Pose cpr_decode(const Cpr& v);

/// Wrap into (-pi, pi].
double wrap_angle(double a);

Mat3 skew(const Vec3& v);

/// Uniform random rotation (Shoemake's method).
UnitQuaternion random_rotation(Rng& rng);

}  // namespace ff
