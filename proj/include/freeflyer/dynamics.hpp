#pragma once

#include <array>

#include "freeflyer/geometry.hpp"
#include "freeflyer/model.hpp"

namespace ff {

// Coupled spacecraft-manipulator dynamics, integrated at the momentum level.
//
// The full joint-space equations of motion split the inertia matrix into base,
// arm and coupling blocks; the arm-to-base coupling shows up as a reaction
// torque on the base. Instead of assembling those blocks and their Coriolis
// companions, this module tracks the total angular momentum about the system
// CoM,
//     H = A(attitude, q) * w_b + B(attitude, q) * qdot,
// where A is the locked rotational inertia and B the arm coupling map, both
// evaluated under the zero-total-linear-momentum closure. Control and
// disturbance torques increment H directly; the base rate is recovered by
// solving A * w_b = H - B * qdot at the current configuration, so the
// inertia-block coupling and all Coriolis terms are honored implicitly and
// momentum is conserved by construction in free float. Joint motion is
// kinematically prescribed (the action space is joint velocity), and base
// translation follows from holding the total linear momentum at zero.

/// Full mechanical state. `base_omega` is expressed in inertial axes and is
/// kept consistent with the momentum decomposition by step().
struct SystemState {
  UnitQuaternion base_attitude;   // base frame -> inertial
  Vec3 base_omega = Vec3::Zero(); // rad/s, inertial components
  Vec3 base_position = Vec3::Zero();
  Vec6 q = Vec6::Zero();
  Vec6 qdot = Vec6::Zero();
  int t = 0;

  bool all_finite() const;
};

/// Commanded joint velocities plus base control / external disturbance torques.
/// qdot_cmd is clipped to the joint velocity limits and tau_b to the base
/// torque limit on use; tau_ext is applied unclipped.
struct CommandInput {
  Vec6 qdot_cmd = Vec6::Zero();
  Vec3 tau_b = Vec3::Zero();
  Vec3 tau_ext = Vec3::Zero();
};

struct FkResult {
  Pose base;
  Pose mount;
  std::array<Pose, 6> link;      // link frames (joint rotation included)
  Pose ee;
  std::array<Vec3, 6> joint_axis_world;
  std::array<Vec3, 6> joint_origin_world;
  std::array<Vec3, 6> link_com_world;
  Vec3 base_com_world = Vec3::Zero();
  Vec3 system_com = Vec3::Zero();
};

FkResult forward_kinematics(const SystemModel& model, const SystemState& state);

struct Jacobians {
  Eigen::Matrix<double, 6, 3> base;        // twist [v_e; w_e] per unit w_b, base origin held
  Eigen::Matrix<double, 6, 6> manipulator; // twist per unit qdot
};

Jacobians jacobians(const SystemModel& model, const SystemState& state);

/// H = locked_inertia * w_b + coupling * qdot about the system CoM with the
/// zero-linear-momentum closure folded in. Assembled from closed-form per-link
/// terms; angular_momentum_direct() is the independent summation route.
struct MomentumDecomposition {
  Mat3 locked_inertia = Mat3::Zero();              // A, symmetric positive definite
  Eigen::Matrix<double, 3, 6> coupling =           // B
      Eigen::Matrix<double, 3, 6>::Zero();
};

MomentumDecomposition momentum_decomposition(const SystemModel& model, const SystemState& state);

/// Total angular momentum about the system CoM by per-body velocity propagation
/// (independent of momentum_decomposition; used to cross-check it).
Vec3 angular_momentum_direct(const SystemModel& model, const SystemState& state);

/// Advance one control step of length dt using `substeps` momentum-level
/// substeps. Joint velocities ramp linearly from state.qdot to the clipped
/// command over the step; joints clamp at angle limits with velocity zeroed
/// for the remainder of the step. Throws NonFiniteStateError if the result is
/// not finite.
SystemState step(const SystemModel& model, const SystemState& state, const CommandInput& cmd,
                 double dt, int substeps);

/// Diagnostic: reaction torque exerted on the base by the commanded arm motion,
/// -(dB/dt * qdot + B * qddot + dA/dt * w_b), with dA/dt and dB/dt obtained by
/// central finite differences along the current motion. Not used by step().
Vec3 reaction_torque_probe(const SystemModel& model, const SystemState& state, const Vec6& qddot);

}  // namespace ff
