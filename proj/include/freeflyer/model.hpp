#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "freeflyer/geometry.hpp"

namespace ff {

/// Rigid body: mass, inertia about the body CoM in body axes, CoM offset from
/// the body reference frame.
struct BodyParams {
  double mass = 0.0;
  Mat3 inertia = Mat3::Zero();
  Vec3 com_offset = Vec3::Zero();
};

/// One revolute link of the serial chain. `origin` is the fixed transform from
/// the parent frame to this link's frame at zero joint angle; the joint rotates
/// about `axis` (unit, link frame) after the origin transform.
struct LinkParams {
  Pose origin;
  Vec3 axis = Vec3::UnitZ();
  BodyParams body;
  double angle_min = 0.0;
  double angle_max = 0.0;
  double velocity_limit = 0.0;
};

struct SystemModel {
  std::string name;
  BodyParams base;
  double base_torque_limit = 0.1;  // N*m per axis
  Pose mount;                      // base frame -> arm mount frame
  std::array<LinkParams, 6> links;
  Pose ee_offset;                  // link 6 frame -> end-effector frame

  double total_mass() const;
};

/// The canonical embedded parameter set: 100 kg base spacecraft carrying a
/// UR5-class 6-DoF arm (published ur_description values), mount at (0,-0.4,0.6).
SystemModel default_system_model();

/// Model parameter file: line-oriented `key = value` text, strict schema,
/// trailing fnv1a-64 checksum over the canonical serialization.
std::string serialize_model(const SystemModel& m);
SystemModel parse_model(const std::string& text);  // throws ConfigError

SystemModel load_model_file(const std::string& path);
void save_model_file(const SystemModel& m, const std::string& path);

std::uint64_t model_checksum(const SystemModel& m);

}  // namespace ff
