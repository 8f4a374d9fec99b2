#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "freeflyer/dynamics.hpp"
#include "freeflyer/rng.hpp"

namespace ff {

using ObsManip = Eigen::Matrix<double, 41, 1>;
using ObsBase = Eigen::Matrix<double, 15, 1>;

struct ObsPair {
  ObsManip manip;
  ObsBase base;
};

/// Target pose, expressed in the episode-initial base frame. spin_rate > 0
/// makes the orientation tumble about spin_axis during the episode.
struct TargetSpec {
  Vec3 position = Vec3::Zero();
  UnitQuaternion orientation;
  double spin_rate = 0.0;       // rad/s
  Vec3 spin_axis = Vec3::UnitZ();
};

/// Reward hyperparameters (manipulator and base agents).
struct RewardConfig {
  double k_pos = 0.5;
  double k_ori = 0.125;
  double k_smth = 0.1;
  double qdot_tol = 2.0;   // rad/s smoothness tolerance
  double k_aln = 0.15;
  double k_done_m = 0.1;
  double eps_pos = 0.05;   // m
  double eps_ori = 0.1;    // rad
  double k_att = 2.5;
  double k_var = 2.5;
  double k_done_b = 0.2;
  double eps_att = 0.05;   // rad
};

/// Disturbance / fault injection knobs for one episode. All-nominal defaults
/// reduce env stepping exactly to dynamics::step on clipped actions.
struct FaultConfig {
  double obs_delay_prob = 0.0;   // per-step chance the obs pair repeats (from step 2)
  double act_delay_prob = 0.0;   // per-step chance the action pair repeats (from step 2)
  double eff_base = 1.0;         // retained base torque efficiency
  double eff_manip = 1.0;        // retained joint velocity efficiency
  Vec3 wheel_momentum0 = Vec3::Zero();
  double wheel_capacity = 3.0;   // N*m*s per axis
  Vec3 obs_bias_pos = Vec3::Zero();      // initial target position bias, decays to 0 at step 30
  double obs_bias_ori_angle = 0.0;       // initial target orientation bias (rad)
  Vec3 obs_bias_ori_axis = Vec3::UnitX();
  double impulse_magnitude = 0.0;        // N*m, applied for exactly one control step
  Vec3 impulse_direction = Vec3::UnitX();
  int impulse_step = -1;                 // 1-indexed trigger step, -1 = never
  double base_mass_scale = 1.0;          // scales base mass and inertia together
};

struct StepErrors {
  double e_pos = 0.0;
  double e_ori = 0.0;
  double e_att = 0.0;
};

struct ManipRewardTerms {
  double total = 0.0;
  double pose_penalty = 0.0;
  double smooth_penalty = 0.0;
  double align_reward = 0.0;
  double done_reward = 0.0;
};

struct BaseRewardTerms {
  double total = 0.0;
  double att_penalty = 0.0;
  double var_reward = 0.0;
  double done_reward = 0.0;
};

struct ManipStepView {
  double e_pos = 0.0;
  double e_ori = 0.0;
  Vec6 qdot = Vec6::Zero();
};

struct BaseStepView {
  double e_att = 0.0;
  EulerZYX attitude;  // base attitude relative to the episode-initial attitude
};

ManipRewardTerms reward_manipulator(const ManipStepView& prev, const ManipStepView& cur,
                                    const RewardConfig& cfg, bool aln_signed = false);
BaseRewardTerms reward_base(const BaseStepView& prev, const BaseStepView& cur,
                            const RewardConfig& cfg);

/// Target sampler: position uniform over the hollow-hemisphere volume
/// (0.25..0.65 m from the mount origin, outward of the mount +z plane),
/// orientation uniform over the rotation group.
TargetSpec sample_target(Rng& rng, const SystemModel& model);
constexpr double kWorkspaceInnerRadius = 0.25;
constexpr double kWorkspaceOuterRadius = 0.65;

/// True iff some run of 10 consecutive steps satisfies all three thresholds
/// simultaneously.
bool success_monitor(std::span<const StepErrors> trace, double eps_pos = 0.05,
                     double eps_ori = 0.1, double eps_att = 0.05, int window = 10);

struct EnvConfig {
  double dt = 0.1;
  int substeps = 10;
  int horizon = 50;
  // folded start with the end-effector near the workspace centroid
  Vec6 initial_q = (Vec6() << -1.0, -2.1, 2.8, 1.2, -2.7, -1.3).finished();
  bool aln_signed = false;
  RewardConfig reward;
};

struct EnvStepResult {
  ObsPair obs;
  ManipRewardTerms reward_manip;
  BaseRewardTerms reward_base;
  StepErrors errors;      // true errors (faults corrupt observations, not these)
  bool episode_over = false;
  bool failed = false;    // non-finite dynamics or gimbal lock; episode is void
};

struct TraceRow {
  int t = 0;
  Vec6 q = Vec6::Zero();
  Vec6 qdot = Vec6::Zero();
  Vec6 action_manip = Vec6::Zero();
  Vec3 action_base = Vec3::Zero();
  Vec3 tau_applied = Vec3::Zero();
  double e_pos = 0.0, e_ori = 0.0, e_att = 0.0;
  double r_m = 0.0, r_b = 0.0;
  bool obs_delayed = false;
  bool act_delayed = false;
};

/// Dual-agent episode environment. One instance per rollout worker; shares
/// only the immutable SystemModel.
class Env {
 public:
  Env(const SystemModel& model, const EnvConfig& cfg);

  /// Fresh episode with a sampled target and nominal faults.
  ObsPair reset(Rng rng);
  ObsPair reset(Rng rng, const TargetSpec& target, const FaultConfig& faults);

  /// Execute raw agent actions (manipulator joint velocities, base torque).
  EnvStepResult step(const Vec6& action_manip, const Vec3& action_base);

  const SystemState& state() const { return state_; }
  const SystemModel& model() const { return model_; }
  const EnvConfig& config() const { return cfg_; }
  int step_index() const { return state_.t; }
  bool failed() const { return failed_; }

  /// Target pose in the episode-initial base frame (spin applied).
  Pose target_pose() const { return target_pose_; }
  /// End-effector pose in the episode-initial base frame.
  Pose ee_pose() const;

  const std::vector<StepErrors>& error_trace() const { return errors_; }
  const std::vector<TraceRow>& trace() const { return trace_; }
  bool success() const;

  /// Delimiter-separated trace export; column order documented in the header row.
  void write_trace_csv(std::ostream& os) const;

  /// Manipulator observation builder (shared with goal relabeling): poses in
  /// the episode-initial base frame.
  static ObsManip manipulator_observation(const Pose& ee, const Pose& target, const Vec6& q,
                                          const Vec6& qdot);

 private:
  ObsPair compute_observation();

  SystemModel model_;
  EnvConfig cfg_;
  Rng rng_{0};

  SystemState state_;
  Pose init_base_;          // world pose of the base at reset
  TargetSpec target_spec_;
  Pose target_pose_;        // initial-base frame, spin applied
  FaultConfig faults_;
  Vec3 wheel_momentum_ = Vec3::Zero();
  Vec3 prev_tau_applied_ = Vec3::Zero();

  ObsPair prev_obs_;
  bool have_prev_obs_ = false;
  Vec6 prev_action_manip_ = Vec6::Zero();
  Vec3 prev_action_base_ = Vec3::Zero();
  bool have_prev_action_ = false;

  ManipStepView prev_manip_view_;
  BaseStepView prev_base_view_;

  std::vector<StepErrors> errors_;
  std::vector<TraceRow> trace_;
  bool failed_ = false;
};

}  // namespace ff
