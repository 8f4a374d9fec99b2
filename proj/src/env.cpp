#include "freeflyer/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "freeflyer/errors.hpp"

namespace ff {

ManipRewardTerms reward_manipulator(const ManipStepView& prev, const ManipStepView& cur,
                                    const RewardConfig& cfg, bool aln_signed) {
  ManipRewardTerms r;
  r.pose_penalty = cfg.k_pos * cur.e_pos + cfg.k_ori * cur.e_ori;

  double smth = 0.0;
  for (int j = 0; j < 6; ++j) {
    smth += std::max(std::abs(cur.qdot[j] - prev.qdot[j]) - cfg.qdot_tol, 0.0);
  }
  r.smooth_penalty = cfg.k_smth * smth;

  const double delta_ori = prev.e_ori - cur.e_ori;
  r.align_reward = cfg.k_aln * std::max(aln_signed ? delta_ori : std::abs(delta_ori), 0.0);

  r.done_reward = cfg.k_done_m * (std::max((cfg.eps_pos - cur.e_pos) / cfg.eps_pos, 0.0) +
                                  std::max((cfg.eps_ori - cur.e_ori) / cfg.eps_ori, 0.0));

  r.total = -r.pose_penalty - r.smooth_penalty + r.align_reward + r.done_reward;
  return r;
}

BaseRewardTerms reward_base(const BaseStepView& prev, const BaseStepView& cur,
                            const RewardConfig& cfg) {
  BaseRewardTerms r;
  r.att_penalty = cfg.k_att * cur.e_att;
  r.var_reward = cfg.k_var * ((prev.e_att - cur.e_att) +
                              (prev.attitude.l1_norm() - cur.attitude.l1_norm()));
  r.done_reward = cfg.k_done_b * std::max((cfg.eps_att - cur.e_att) / cfg.eps_att, 0.0);
  r.total = -r.att_penalty + r.var_reward + r.done_reward;
  return r;
}

TargetSpec sample_target(Rng& rng, const SystemModel& model) {
  TargetSpec t;
  const double lo = kWorkspaceInnerRadius;
  const double hi = kWorkspaceOuterRadius;
  const double radius = std::cbrt(rng.uniform(lo * lo * lo, hi * hi * hi));
  Vec3 dir = rng.unit_vector();
  if (dir.z() < 0.0) dir.z() = -dir.z();  // outward of the mount plane
  t.position = model.mount.translation + radius * (model.mount.rotation * dir);
  t.orientation = random_rotation(rng);
  return t;
}

bool success_monitor(std::span<const StepErrors> trace, double eps_pos, double eps_ori,
                     double eps_att, int window) {
  int run = 0;
  for (const auto& e : trace) {
    if (e.e_pos <= eps_pos && e.e_ori <= eps_ori && e.e_att <= eps_att) {
      if (++run >= window) return true;
    } else {
      run = 0;
    }
  }
  return false;
}

Env::Env(const SystemModel& model, const EnvConfig& cfg) : model_(model), cfg_(cfg) {}

ObsPair Env::reset(Rng rng) {
  TargetSpec target = sample_target(rng, model_);
  return reset(rng, target, FaultConfig{});
}

ObsPair Env::reset(Rng rng, const TargetSpec& target, const FaultConfig& faults) {
  rng_ = rng;
  faults_ = faults;

  if (faults.base_mass_scale != 1.0) {
    // fixed geometry: inertia scales with mass
    model_.base.mass *= faults.base_mass_scale;
    model_.base.inertia *= faults.base_mass_scale;
  }

  state_ = SystemState{};
  state_.q = cfg_.initial_q;
  init_base_ = {state_.base_attitude.to_matrix(), state_.base_position};

  target_spec_ = target;
  target_pose_ = {target.orientation.to_matrix(), target.position};

  wheel_momentum_ = faults.wheel_momentum0;
  prev_tau_applied_ = Vec3::Zero();
  have_prev_obs_ = false;
  have_prev_action_ = false;
  failed_ = false;
  errors_.clear();
  trace_.clear();

  const Pose ee = ee_pose();
  prev_manip_view_ = {(ee.translation - target_pose_.translation).norm(),
                      geodesic_angle(ee.rotation, target_pose_.rotation), state_.qdot};
  prev_base_view_ = {0.0, EulerZYX{}};

  ObsPair obs = compute_observation();
  prev_obs_ = obs;
  have_prev_obs_ = true;
  return obs;
}

Pose Env::ee_pose() const {
  const FkResult fk = forward_kinematics(model_, state_);
  return init_base_.inverse() * fk.ee;
}

ObsManip Env::manipulator_observation(const Pose& ee, const Pose& target, const Vec6& q,
                                      const Vec6& qdot) {
  ObsManip o;
  o.segment<9>(0) = cpr_encode(ee);
  o.segment<9>(9) = cpr_encode(target);
  o.segment<9>(18) = cpr_encode(ee.inverse() * target);
  o[27] = (ee.translation - target.translation).norm();
  o[28] = geodesic_angle(ee.rotation, target.rotation);
  o.segment<6>(29) = q;
  o.segment<6>(35) = qdot;
  return o;
}

ObsPair Env::compute_observation() {
  // perceived target: decaying initial observation bias
  Pose target_obs = target_pose_;
  const double decay = std::max(0.0, 1.0 - static_cast<double>(state_.t) / 30.0);
  if (decay > 0.0 && (faults_.obs_bias_pos.norm() > 0.0 || faults_.obs_bias_ori_angle != 0.0)) {
    target_obs.translation += decay * faults_.obs_bias_pos;
    if (faults_.obs_bias_ori_angle != 0.0) {
      target_obs.rotation = UnitQuaternion::from_axis_angle(faults_.obs_bias_ori_axis,
                                                            decay * faults_.obs_bias_ori_angle)
                                .to_matrix() *
                            target_obs.rotation;
    }
  }

  ObsPair obs;
  obs.manip = manipulator_observation(ee_pose(), target_obs, state_.q, state_.qdot);

  const Mat3 rel = init_base_.rotation.transpose() * state_.base_attitude.to_matrix();
  obs.base.segment<6>(0) = rot6d_encode(rel);
  obs.base.segment<3>(6) = state_.q.head<3>();
  obs.base.segment<3>(9) = state_.qdot.head<3>();
  obs.base.segment<3>(12) = prev_tau_applied_;
  return obs;
}

EnvStepResult Env::step(const Vec6& action_manip, const Vec3& action_base) {
  EnvStepResult out;
  const int step_number = state_.t + 1;  // 1-indexed simulation step

  // action transmission delay (from the second step on)
  Vec6 a_m = action_manip;
  Vec3 a_b = action_base;
  bool act_delayed = false;
  if (faults_.act_delay_prob > 0.0 && step_number >= 2 && have_prev_action_) {
    if (rng_.uniform() < faults_.act_delay_prob) {
      a_m = prev_action_manip_;
      a_b = prev_action_base_;
      act_delayed = true;
    }
  }
  prev_action_manip_ = a_m;
  prev_action_base_ = a_b;
  have_prev_action_ = true;

  CommandInput cmd;
  for (int j = 0; j < 6; ++j) {
    const double lim = model_.links[j].velocity_limit;
    cmd.qdot_cmd[j] = faults_.eff_manip * std::clamp(a_m[j], -lim, lim);
  }
  Vec3 tau_req;
  for (int k = 0; k < 3; ++k) {
    tau_req[k] = faults_.eff_base *
                 std::clamp(a_b[k], -model_.base_torque_limit, model_.base_torque_limit);
  }

  // reaction wheel momentum budget: a fully saturated axis has no torque
  // authority at all; otherwise torque that would overrun the capacity is cut
  Vec3 tau_applied = tau_req;
  for (int k = 0; k < 3; ++k) {
    const double h_next = wheel_momentum_[k] + tau_applied[k] * cfg_.dt;
    if (std::abs(wheel_momentum_[k]) >= faults_.wheel_capacity ||
        std::abs(h_next) > faults_.wheel_capacity) {
      tau_applied[k] = 0.0;
    }
  }
  wheel_momentum_ += tau_applied * cfg_.dt;
  cmd.tau_b = tau_applied;

  if (step_number == faults_.impulse_step) {
    cmd.tau_ext = faults_.impulse_magnitude * faults_.impulse_direction;
  }

  try {
    state_ = ff::step(model_, state_, cmd, cfg_.dt, cfg_.substeps);
  } catch (const NonFiniteStateError&) {
    failed_ = true;
    out.failed = true;
    out.episode_over = true;
    return out;
  }

  // target tumble
  if (target_spec_.spin_rate != 0.0) {
    target_pose_.rotation = UnitQuaternion::from_axis_angle(target_spec_.spin_axis,
                                                            target_spec_.spin_rate * cfg_.dt)
                                .to_matrix() *
                            target_pose_.rotation;
  }

  // true errors
  const Pose ee = ee_pose();
  out.errors.e_pos = (ee.translation - target_pose_.translation).norm();
  out.errors.e_ori = geodesic_angle(ee.rotation, target_pose_.rotation);
  const Mat3 rel = init_base_.rotation.transpose() * state_.base_attitude.to_matrix();
  out.errors.e_att = geodesic_angle(Mat3::Identity(), rel);
  errors_.push_back(out.errors);

  // rewards use the true state; gimbal lock voids the episode
  ManipStepView manip_view{out.errors.e_pos, out.errors.e_ori, state_.qdot};
  BaseStepView base_view;
  base_view.e_att = out.errors.e_att;
  try {
    base_view.attitude = euler_zyx_from_matrix(rel);
  } catch (const GimbalLockError&) {
    failed_ = true;
    out.failed = true;
    out.episode_over = true;
    return out;
  }
  out.reward_manip = reward_manipulator(prev_manip_view_, manip_view, cfg_.reward, cfg_.aln_signed);
  out.reward_base = reward_base(prev_base_view_, base_view, cfg_.reward);
  prev_manip_view_ = manip_view;
  prev_base_view_ = base_view;
  prev_tau_applied_ = tau_applied;

  // observation (possibly replaced by the previous pair, from step 2 on)
  ObsPair fresh = compute_observation();
  bool obs_delayed = false;
  if (faults_.obs_delay_prob > 0.0 && state_.t >= 2 && have_prev_obs_) {
    if (rng_.uniform() < faults_.obs_delay_prob) {
      fresh = prev_obs_;
      obs_delayed = true;
    }
  }
  prev_obs_ = fresh;
  out.obs = fresh;

  out.episode_over = state_.t >= cfg_.horizon;

  TraceRow row;
  row.t = state_.t;
  row.q = state_.q;
  row.qdot = state_.qdot;
  row.action_manip = action_manip;
  row.action_base = action_base;
  row.tau_applied = tau_applied;
  row.e_pos = out.errors.e_pos;
  row.e_ori = out.errors.e_ori;
  row.e_att = out.errors.e_att;
  row.r_m = out.reward_manip.total;
  row.r_b = out.reward_base.total;
  row.obs_delayed = obs_delayed;
  row.act_delayed = act_delayed;
  trace_.push_back(row);

  return out;
}

bool Env::success() const { return success_monitor(errors_); }

void Env::write_trace_csv(std::ostream& os) const {
  os << "t";
  for (int j = 1; j <= 6; ++j) os << ",q" << j;
  for (int j = 1; j <= 6; ++j) os << ",qdot" << j;
  for (int j = 1; j <= 6; ++j) os << ",a_m" << j;
  for (int k = 1; k <= 3; ++k) os << ",a_b" << k;
  for (int k = 1; k <= 3; ++k) os << ",tau" << k;
  os << ",e_pos,e_ori,e_att,r_m,r_b,obs_delayed,act_delayed\n";
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << ',' << buf;
  };
  for (const auto& r : trace_) {
    os << r.t;
    for (int j = 0; j < 6; ++j) num(r.q[j]);
    for (int j = 0; j < 6; ++j) num(r.qdot[j]);
    for (int j = 0; j < 6; ++j) num(r.action_manip[j]);
    for (int k = 0; k < 3; ++k) num(r.action_base[k]);
    for (int k = 0; k < 3; ++k) num(r.tau_applied[k]);
    num(r.e_pos);
    num(r.e_ori);
    num(r.e_att);
    num(r.r_m);
    num(r.r_b);
    os << ',' << (r.obs_delayed ? 1 : 0) << ',' << (r.act_delayed ? 1 : 0) << '\n';
  }
}

}  // namespace ff
