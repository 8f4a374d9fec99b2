#pragma once

#include <optional>
#include <vector>

#include "freeflyer/dynamics.hpp"
#include "freeflyer/env.hpp"
#include "freeflyer/rng.hpp"

namespace ff {

// Model-based expert policies used as prior guidance: a joint-space RRT*
// planner under the fixed-base assumption for the arm, and a discrete PID
// attitude controller for the base.

struct PidConfig {
  double kp = 15.0;
  double ki = 2.5;
  double kd = 800.0;
  double output_limit = 0.1;  // N*m per axis
  // Freeze the integral on saturated axes. The literal discrete sum winds up
  // badly under the 0.1 N*m clip on large initial errors (see tests); small
  // errors behave identically either way.
  bool conditional_integration = true;
};

class PidController {
 public:
  explicit PidController(const PidConfig& cfg = {}) : cfg_(cfg) {}

  /// tau = clip(Kp e + Ki sum(e) + Kd (e - e_prev), +-limit); the running sum
  /// includes the current error and internals update after the output.
  Vec3 step(const Vec3& error);
  void reset();

  const Vec3& error_sum() const { return error_sum_; }

 private:
  PidConfig cfg_;
  Vec3 error_sum_ = Vec3::Zero();
  Vec3 prev_error_ = Vec3::Zero();
};

/// Damped-least-squares inverse kinematics under the fixed-base assumption.
/// Returns up to `seeds` joint configurations whose fixed-base FK lands within
/// 1e-3 m / 1e-2 rad of the target; empty when no seed converges.
std::vector<Vec6> solve_ik(const SystemModel& model, const Pose& target_in_base, Rng& rng,
                           int seeds);

struct JointPath {
  std::vector<Vec6> waypoints;
  double cost = 0.0;  // sum of consecutive L2 joint distances
};

struct RrtParams {
  double steer = 0.3;        // rad, max extension per sample
  double gamma = 4.0;        // rewiring radius gamma * (log n / n)^(1/6)
  double goal_bias = 0.1;
  double goal_tolerance = 0.05;  // rad, joint-space distance
  int budget = 3000;
};

/// Joint-space RRT* with rewiring; anytime best-cost tracking. Returns the
/// lowest-cost path found or nullopt if no goal connection within the budget.
/// Edges longer than the steering step (from rewired connections) are
/// subdivided in the returned path. cost_history, when given, records the best
/// cost every 500 iterations.
std::optional<JointPath> rrt_star_plan(const SystemModel& model, const Vec6& q_start,
                                       const std::vector<Vec6>& goals, const RrtParams& params,
                                       Rng& rng, std::vector<double>* cost_history = nullptr);

/// Time-parameterized joint reference at fixed dt: constant joint-space speed
/// along the path, frozen at the terminus once reached.
struct PriorTrajectory {
  std::vector<Vec6> q_ref;     // size horizon + 1
  std::vector<Vec6> qdot_ref;  // size horizon, forward differences / dt
};

PriorTrajectory time_parameterize(const JointPath& path, double dt, int horizon, double speed);

/// qdot_cmd = qdot_ref(t) + k_track (q_ref(t) - q), clipped to the limits.
Vec6 prior_manipulator_action(const PriorTrajectory& traj, const Vec6& q, int t,
                              double k_track = 2.0, double limit = 2.0);

struct ExpertConfig {
  RrtParams rrt;
  int ik_seeds = 8;
  double track_gain = 2.0;     // 1/s
  double speed_fraction = 0.8; // of the 2 rad/s joint speed limit
  PidConfig pid;
};

/// Per-episode expert: plans once at episode start, then tracks the reference
/// and stabilizes the base. Falls back to zero arm velocity plus PID when
/// planning fails (non-optimal guidance by design).
class ExpertPolicy {
 public:
  ExpertPolicy(const SystemModel& model, const ExpertConfig& cfg, const Pose& target_in_init_base,
               const Vec6& q_start, Rng rng);

  Vec6 manipulator_action(const Vec6& q, int t);
  /// error = Euler angles of the rotation from current to initial attitude;
  /// torque components in the inertial frame.
  Vec3 base_action(const Mat3& attitude_rel_initial, const Mat3& init_rotation);

  bool has_plan() const { return planned_; }
  const JointPath* path() const { return planned_ ? &path_ : nullptr; }

 private:
  ExpertConfig cfg_;
  PidController pid_;
  PriorTrajectory traj_;
  JointPath path_;
  bool planned_ = false;
};

/// Waypoint dump in the same delimiter-separated style as episode traces.
void write_path_csv(std::ostream& os, const JointPath& path);

}  // namespace ff
