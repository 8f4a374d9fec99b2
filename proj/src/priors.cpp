#include "freeflyer/priors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/QR>
#include <limits>
#include <ostream>

namespace ff {

Vec3 PidController::step(const Vec3& error) {
  const Vec3 sum = error_sum_ + error;
  const Vec3 raw = cfg_.kp * error + cfg_.ki * sum + cfg_.kd * (error - prev_error_);
  Vec3 out;
  for (int k = 0; k < 3; ++k) {
    out[k] = std::clamp(raw[k], -cfg_.output_limit, cfg_.output_limit);
    const bool saturated = raw[k] != out[k];
    if (!cfg_.conditional_integration || !saturated) {
      error_sum_[k] = sum[k];
    }
  }
  prev_error_ = error;
  return out;
}

void PidController::reset() {
  error_sum_.setZero();
  prev_error_.setZero();
}

namespace {

// fixed-base FK/jacobian: identical chain with the base pinned at identity
SystemState fixed_base_state(const Vec6& q) {
  SystemState s;
  s.q = q;
  return s;
}

Vec6 clamp_to_limits(const SystemModel& model, Vec6 q) {
  for (int j = 0; j < 6; ++j) q[j] = std::clamp(q[j], model.links[j].angle_min, model.links[j].angle_max);
  return q;
}

bool within_limits(const SystemModel& model, const Vec6& q) {
  for (int j = 0; j < 6; ++j) {
    if (q[j] < model.links[j].angle_min || q[j] > model.links[j].angle_max) return false;
  }
  return true;
}

}  // namespace

std::vector<Vec6> solve_ik(const SystemModel& model, const Pose& target_in_base, Rng& rng,
                           int seeds) {
  std::vector<Vec6> solutions;
  constexpr double kPosTol = 1e-3;
  constexpr double kOriTol = 1e-2;
  constexpr double kDamping = 0.1;
  constexpr int kMaxIters = 150;

  for (int s = 0; s < seeds; ++s) {
    Vec6 q;
    for (int j = 0; j < 6; ++j) q[j] = rng.uniform(-M_PI, M_PI);
    q = clamp_to_limits(model, q);

    for (int it = 0; it < kMaxIters; ++it) {
      const FkResult fk = forward_kinematics(model, fixed_base_state(q));
      const Vec3 dp = target_in_base.translation - fk.ee.translation;
      const Vec3 dw = rotation_log(target_in_base.rotation * fk.ee.rotation.transpose());
      if (dp.norm() <= kPosTol && geodesic_angle(fk.ee.rotation, target_in_base.rotation) <= kOriTol) {
        solutions.push_back(q);
        break;
      }
      Eigen::Matrix<double, 6, 1> err;
      err << dp, dw;
      const Eigen::Matrix<double, 6, 6> jm = jacobians(model, fixed_base_state(q)).manipulator;
      const Eigen::Matrix<double, 6, 6> jjt =
          jm * jm.transpose() + kDamping * kDamping * Eigen::Matrix<double, 6, 6>::Identity();
      Vec6 dq = jm.transpose() * jjt.ldlt().solve(err);
      const double n = dq.norm();
      if (n > 0.5) dq *= 0.5 / n;
      q = clamp_to_limits(model, q + dq);
    }
  }
  return solutions;
}

std::optional<JointPath> rrt_star_plan(const SystemModel& model, const Vec6& q_start,
                                       const std::vector<Vec6>& goals, const RrtParams& params,
                                       Rng& rng, std::vector<double>* cost_history) {
  if (goals.empty() || !within_limits(model, q_start)) return std::nullopt;
  std::vector<Vec6> valid_goals;
  for (const auto& g : goals) {
    if (within_limits(model, g)) valid_goals.push_back(g);
  }
  if (valid_goals.empty()) return std::nullopt;

  auto nearest_goal_dist = [&](const Vec6& q) {
    double best = std::numeric_limits<double>::infinity();
    int idx = -1;
    for (std::size_t i = 0; i < valid_goals.size(); ++i) {
      const double d = (valid_goals[i] - q).norm();
      if (d < best) {
        best = d;
        idx = static_cast<int>(i);
      }
    }
    return std::pair<double, int>(best, idx);
  };

  // start already inside the goal tolerance
  if (const auto [d0, g0] = nearest_goal_dist(q_start); d0 <= params.goal_tolerance) {
    JointPath p;
    p.waypoints = {q_start};
    p.cost = 0.0;
    (void)g0;
    if (cost_history) cost_history->push_back(0.0);
    return p;
  }

  std::vector<Vec6> nodes{q_start};
  std::vector<int> parent{-1};
  std::vector<double> cost{0.0};
  std::vector<std::vector<int>> children{{}};
  nodes.reserve(params.budget + 1);
  parent.reserve(params.budget + 1);
  cost.reserve(params.budget + 1);
  children.reserve(params.budget + 1);

  // depth-first cost refresh after a rewire
  auto propagate = [&](int root) {
    std::vector<int> stack{root};
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (const int c : children[u]) {
        cost[c] = cost[u] + (nodes[c] - nodes[u]).norm();
        stack.push_back(c);
      }
    }
  };

  struct Candidate {
    int node;
    int goal;
  };
  std::vector<Candidate> candidates;

  auto tree_cost = [&](int i) { return cost[i]; };

  auto best_candidate_cost = [&]() {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : candidates) {
      best = std::min(best, tree_cost(c.node) + (valid_goals[c.goal] - nodes[c.node]).norm());
    }
    return best;
  };

  // Informed sampling state: once any solution exists, draw uniform samples
  // from the prolate hyperspheroid whose foci are start and the best goal and
  // whose major axis is the best cost (only such samples can improve the path).
  int informed_goal = -1;
  double informed_cost = std::numeric_limits<double>::infinity();
  Eigen::Matrix<double, 6, 6> informed_frame = Eigen::Matrix<double, 6, 6>::Identity();

  auto refresh_informed = [&]() {
    double best = std::numeric_limits<double>::infinity();
    int goal = -1;
    for (const auto& c : candidates) {
      const double total = cost[c.node] + (valid_goals[c.goal] - nodes[c.node]).norm();
      if (total < best) {
        best = total;
        goal = c.goal;
      }
    }
    if (goal < 0) return;
    informed_cost = best;
    if (goal != informed_goal) {
      informed_goal = goal;
      // orthonormal frame with the first axis along start -> goal
      Vec6 dir = (valid_goals[goal] - q_start).normalized();
      Eigen::Matrix<double, 6, 6> m = Eigen::Matrix<double, 6, 6>::Identity();
      m.col(0) = dir;
      informed_frame = Eigen::HouseholderQR<Eigen::Matrix<double, 6, 6>>(m).householderQ();
      if (informed_frame.col(0).dot(dir) < 0) informed_frame = -informed_frame;
    }
  };

  auto sample_informed = [&](Vec6& out) -> bool {
    if (informed_goal < 0) return false;
    const Vec6& g = valid_goals[informed_goal];
    const double c_min = (g - q_start).norm();
    if (informed_cost <= c_min + 1e-9) return false;
    const double r1 = informed_cost / 2.0;
    const double r2 = std::sqrt(informed_cost * informed_cost - c_min * c_min) / 2.0;
    const Vec6 center = 0.5 * (q_start + g);
    for (int attempt = 0; attempt < 16; ++attempt) {
      Vec6 ball;
      for (int j = 0; j < 6; ++j) ball[j] = rng.normal();
      ball.normalize();
      ball *= std::pow(rng.uniform(), 1.0 / 6.0);
      Vec6 scaled = ball;
      scaled[0] *= r1;
      for (int j = 1; j < 6; ++j) scaled[j] *= r2;
      const Vec6 candidate = center + informed_frame * scaled;
      if (within_limits(model, candidate)) {
        out = candidate;
        return true;
      }
    }
    return false;
  };

  for (int it = 1; it <= params.budget; ++it) {
    Vec6 sample;
    if (rng.uniform() < params.goal_bias) {
      sample = valid_goals[rng.uniform_int(valid_goals.size())];
    } else if (!sample_informed(sample)) {
      for (int j = 0; j < 6; ++j) {
        sample[j] = rng.uniform(model.links[j].angle_min, model.links[j].angle_max);
      }
    }

    // nearest node
    int nearest = 0;
    double dmin = (nodes[0] - sample).norm();
    for (std::size_t i = 1; i < nodes.size(); ++i) {
      const double d = (nodes[i] - sample).norm();
      if (d < dmin) {
        dmin = d;
        nearest = static_cast<int>(i);
      }
    }
    if (dmin < 1e-12) continue;

    const Vec6 q_new = nodes[nearest] + (sample - nodes[nearest]) * (std::min(params.steer, dmin) / dmin);

    // neighbor set within the rewiring radius
    const double n = static_cast<double>(nodes.size());
    const double radius = params.gamma * std::pow(std::log(n + 1.0) / (n + 1.0), 1.0 / 6.0);
    std::vector<int> neighbors;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if ((nodes[i] - q_new).norm() <= radius) neighbors.push_back(static_cast<int>(i));
    }
    if (neighbors.empty()) neighbors.push_back(nearest);

    // choose the cheapest parent (free space: every straight edge is valid)
    int best_parent = nearest;
    double best_cost = cost[nearest] + (nodes[nearest] - q_new).norm();
    for (const int i : neighbors) {
      const double c = cost[i] + (nodes[i] - q_new).norm();
      if (c < best_cost) {
        best_cost = c;
        best_parent = i;
      }
    }

    const int new_idx = static_cast<int>(nodes.size());
    nodes.push_back(q_new);
    parent.push_back(best_parent);
    cost.push_back(best_cost);
    children.push_back({});
    children[best_parent].push_back(new_idx);

    // rewire neighbors through the new node when cheaper
    for (const int i : neighbors) {
      const double via_new = best_cost + (nodes[i] - q_new).norm();
      if (via_new + 1e-12 < cost[i]) {
        auto& sib = children[parent[i]];
        sib.erase(std::find(sib.begin(), sib.end(), i));
        parent[i] = new_idx;
        cost[i] = via_new;
        children[new_idx].push_back(i);
        propagate(i);
      }
    }

    if (const auto [dg, gi] = nearest_goal_dist(q_new); dg <= params.goal_tolerance) {
      candidates.push_back({new_idx, gi});
    }
    if (!candidates.empty()) refresh_informed();

    if (cost_history && it % 500 == 0) cost_history->push_back(best_candidate_cost());
  }

  if (candidates.empty()) return std::nullopt;

  double best = std::numeric_limits<double>::infinity();
  int best_node = -1, best_goal = -1;
  for (const auto& c : candidates) {
    const double total = cost[c.node] + (valid_goals[c.goal] - nodes[c.node]).norm();
    if (total < best) {
      best = total;
      best_node = c.node;
      best_goal = c.goal;
    }
  }

  // walk up, then orient start -> goal and subdivide long rewired edges
  std::vector<Vec6> rev;
  for (int i = best_node; i >= 0; i = parent[i]) rev.push_back(nodes[i]);
  std::reverse(rev.begin(), rev.end());
  rev.push_back(valid_goals[best_goal]);

  JointPath path;
  path.waypoints.push_back(rev.front());
  for (std::size_t i = 1; i < rev.size(); ++i) {
    const Vec6 from = path.waypoints.back();
    const Vec6 to = rev[i];
    const double d = (to - from).norm();
    const int pieces = std::max(1, static_cast<int>(std::ceil(d / params.steer)));
    for (int p = 1; p <= pieces; ++p) {
      path.waypoints.push_back(from + (to - from) * (static_cast<double>(p) / pieces));
    }
  }
  path.cost = 0.0;
  for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
    path.cost += (path.waypoints[i] - path.waypoints[i - 1]).norm();
  }
  return path;
}

PriorTrajectory time_parameterize(const JointPath& path, double dt, int horizon, double speed) {
  PriorTrajectory traj;
  traj.q_ref.reserve(horizon + 1);

  // cumulative arc length along the polyline
  std::vector<double> arc{0.0};
  for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
    arc.push_back(arc.back() + (path.waypoints[i] - path.waypoints[i - 1]).norm());
  }
  const double total = arc.back();

  auto point_at = [&](double s) -> Vec6 {
    if (s >= total || path.waypoints.size() == 1) return path.waypoints.back();
    const auto it = std::upper_bound(arc.begin(), arc.end(), s);
    const std::size_t hi = std::min(static_cast<std::size_t>(it - arc.begin()),
                                    path.waypoints.size() - 1);
    const std::size_t lo = hi - 1;
    const double seg = arc[hi] - arc[lo];
    const double f = seg > 0.0 ? (s - arc[lo]) / seg : 0.0;
    return path.waypoints[lo] + f * (path.waypoints[hi] - path.waypoints[lo]);
  };

  for (int t = 0; t <= horizon; ++t) {
    traj.q_ref.push_back(point_at(speed * dt * t));
  }
  traj.qdot_ref.reserve(horizon);
  for (int t = 0; t < horizon; ++t) {
    traj.qdot_ref.push_back((traj.q_ref[t + 1] - traj.q_ref[t]) / dt);
  }
  return traj;
}

Vec6 prior_manipulator_action(const PriorTrajectory& traj, const Vec6& q, int t, double k_track,
                              double limit) {
  const int last = static_cast<int>(traj.q_ref.size()) - 1;
  const int ti = std::min(t, last);
  const Vec6& q_ref = traj.q_ref[ti];
  const Vec6 qdot_ref =
      t < static_cast<int>(traj.qdot_ref.size()) ? traj.qdot_ref[t] : Vec6::Zero().eval();
  Vec6 cmd = qdot_ref + k_track * (q_ref - q);
  for (int j = 0; j < 6; ++j) cmd[j] = std::clamp(cmd[j], -limit, limit);
  return cmd;
}

ExpertPolicy::ExpertPolicy(const SystemModel& model, const ExpertConfig& cfg,
                           const Pose& target_in_init_base, const Vec6& q_start, Rng rng)
    : cfg_(cfg), pid_(cfg.pid) {
  // the arm is planned fixed-base against the target as seen at episode start
  Rng ik_rng = rng.substream("ik");
  const std::vector<Vec6> goals = solve_ik(model, target_in_init_base, ik_rng, cfg.ik_seeds);
  if (!goals.empty()) {
    Rng plan_rng = rng.substream("rrt");
    if (auto path = rrt_star_plan(model, q_start, goals, cfg.rrt, plan_rng)) {
      path_ = std::move(*path);
      traj_ = time_parameterize(path_, 0.1, 120, cfg.speed_fraction * 2.0);
      planned_ = true;
    }
  }
}

Vec6 ExpertPolicy::manipulator_action(const Vec6& q, int t) {
  if (!planned_) return Vec6::Zero();
  return prior_manipulator_action(traj_, q, t, cfg_.track_gain, 2.0);
}

Vec3 ExpertPolicy::base_action(const Mat3& attitude_rel_initial, const Mat3& init_rotation) {
  Vec3 error;
  try {
    const EulerZYX e = euler_zyx_from_matrix(attitude_rel_initial.transpose());
    error = e.vec();
  } catch (const GimbalLockError&) {
    error = rotation_log(attitude_rel_initial.transpose());
  }
  return init_rotation * pid_.step(error);
}

void write_path_csv(std::ostream& os, const JointPath& path) {
  os << "index";
  for (int j = 1; j <= 6; ++j) os << ",q" << j;
  os << "\n";
  char buf[32];
  for (std::size_t i = 0; i < path.waypoints.size(); ++i) {
    os << i;
    for (int j = 0; j < 6; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", path.waypoints[i][j]);
      os << ',' << buf;
    }
    os << '\n';
  }
}

}  // namespace ff
