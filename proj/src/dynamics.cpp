#include "freeflyer/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "freeflyer/errors.hpp"

namespace ff {

bool SystemState::all_finite() const {
  auto fin = [](double v) { return std::isfinite(v); };
  return fin(base_attitude.w) && fin(base_attitude.x) && fin(base_attitude.y) &&
         fin(base_attitude.z) && base_omega.allFinite() && base_position.allFinite() &&
         q.allFinite() && qdot.allFinite();
}

FkResult forward_kinematics(const SystemModel& model, const SystemState& state) {
  FkResult out;
  out.base = {state.base_attitude.to_matrix(), state.base_position};
  out.mount = out.base * model.mount;

  Pose cur = out.mount;
  double mass_sum = model.base.mass;
  out.base_com_world = out.base.apply(model.base.com_offset);
  Vec3 weighted = model.base.mass * out.base_com_world;

  for (int i = 0; i < 6; ++i) {
    const auto& link = model.links[i];
    cur = cur * link.origin;
    out.joint_origin_world[i] = cur.translation;
    // joint rotation about the link-frame axis
    const Mat3 rj = UnitQuaternion::from_axis_angle(link.axis, state.q[i]).to_matrix();
    cur = Pose{cur.rotation * rj, cur.translation};
    out.link[i] = cur;
    out.joint_axis_world[i] = cur.rotation * link.axis;
    out.link_com_world[i] = cur.apply(link.body.com_offset);
    weighted += link.body.mass * out.link_com_world[i];
    mass_sum += link.body.mass;
  }
  out.ee = cur * model.ee_offset;
  out.system_com = weighted / mass_sum;
  return out;
}

Jacobians jacobians(const SystemModel& model, const SystemState& state) {
  const FkResult fk = forward_kinematics(model, state);
  Jacobians j;
  const Vec3 r = fk.ee.translation - fk.base.translation;
  j.base.topRows<3>() = -skew(r);
  j.base.bottomRows<3>() = Mat3::Identity();
  for (int i = 0; i < 6; ++i) {
    const Vec3& a = fk.joint_axis_world[i];
    j.manipulator.block<3, 1>(0, i) = a.cross(fk.ee.translation - fk.joint_origin_world[i]);
    j.manipulator.block<3, 1>(3, i) = a;
  }
  return j;
}

namespace {

MomentumDecomposition decompose(const SystemModel& model, const FkResult& fk) {
  MomentumDecomposition d;

  // A: composite inertia about the system CoM with all joints locked.
  auto add_body = [&](const Mat3& rot, const BodyParams& body, const Vec3& com_world) {
    const Mat3 iw = rot * body.inertia * rot.transpose();
    const Vec3 dd = com_world - fk.system_com;
    d.locked_inertia += iw + body.mass * (dd.squaredNorm() * Mat3::Identity() - dd * dd.transpose());
  };
  add_body(fk.base.rotation, model.base, fk.base_com_world);
  for (int i = 0; i < 6; ++i) {
    add_body(fk.link[i].rotation, model.links[i].body, fk.link_com_world[i]);
  }

  // B column j: contribution of unit qdot_j. Only links at or beyond joint j
  // move; the linear-momentum closure drops out because sum(m_i * d_i) = 0.
  for (int j = 0; j < 6; ++j) {
    const Vec3& axis = fk.joint_axis_world[j];
    const Vec3& pivot = fk.joint_origin_world[j];
    Vec3 col = Vec3::Zero();
    for (int i = j; i < 6; ++i) {
      const auto& body = model.links[i].body;
      const Mat3 iw = fk.link[i].rotation * body.inertia * fk.link[i].rotation.transpose();
      const Vec3 dd = fk.link_com_world[i] - fk.system_com;
      col += iw * axis + body.mass * dd.cross(axis.cross(fk.link_com_world[i] - pivot));
    }
    d.coupling.col(j) = col;
  }
  return d;
}

Vec3 solve_base_rate(const MomentumDecomposition& d, const Vec3& h, const Vec6& qdot) {
  return d.locked_inertia.ldlt().solve(h - d.coupling * qdot);
}

}  // namespace

MomentumDecomposition momentum_decomposition(const SystemModel& model, const SystemState& state) {
  return decompose(model, forward_kinematics(model, state));
}

Vec3 angular_momentum_direct(const SystemModel& model, const SystemState& state) {
  const FkResult fk = forward_kinematics(model, state);
  const Vec3& w_b = state.base_omega;

  // per-body angular velocities and CoM velocities with the base origin held
  std::array<Vec3, 7> omega;
  std::array<Vec3, 7> vel;
  std::array<double, 7> mass;
  std::array<Vec3, 7> com;
  std::array<Mat3, 7> inertia_w;

  omega[0] = w_b;
  com[0] = fk.base_com_world;
  vel[0] = w_b.cross(com[0] - fk.base.translation);
  mass[0] = model.base.mass;
  inertia_w[0] = fk.base.rotation * model.base.inertia * fk.base.rotation.transpose();

  Vec3 w_accum = w_b;
  for (int i = 0; i < 6; ++i) {
    w_accum += fk.joint_axis_world[i] * state.qdot[i];
    omega[i + 1] = w_accum;
    com[i + 1] = fk.link_com_world[i];
    Vec3 v = w_b.cross(com[i + 1] - fk.base.translation);
    for (int j = 0; j <= i; ++j) {
      v += state.qdot[j] * fk.joint_axis_world[j].cross(com[i + 1] - fk.joint_origin_world[j]);
    }
    vel[i + 1] = v;
    mass[i + 1] = model.links[i].body.mass;
    inertia_w[i + 1] =
        fk.link[i].rotation * model.links[i].body.inertia * fk.link[i].rotation.transpose();
  }

  // zero-total-linear-momentum closure fixes the base origin velocity
  Vec3 p = Vec3::Zero();
  double m_tot = 0.0;
  for (int i = 0; i < 7; ++i) {
    p += mass[i] * vel[i];
    m_tot += mass[i];
  }
  const Vec3 v_base = -p / m_tot;

  Vec3 h = Vec3::Zero();
  for (int i = 0; i < 7; ++i) {
    h += inertia_w[i] * omega[i] + mass[i] * (com[i] - fk.system_com).cross(vel[i] + v_base);
  }
  return h;
}

SystemState step(const SystemModel& model, const SystemState& state, const CommandInput& cmd,
                 double dt, int substeps) {
  if (!(dt > 0.0) || substeps < 1) throw ConfigError("step: dt must be > 0 and substeps >= 1");

  Vec6 qdot_cmd;
  for (int j = 0; j < 6; ++j) {
    const double lim = model.links[j].velocity_limit;
    qdot_cmd[j] = std::clamp(cmd.qdot_cmd[j], -lim, lim);
  }
  Vec3 tau = cmd.tau_ext;
  for (int k = 0; k < 3; ++k) {
    tau[k] += std::clamp(cmd.tau_b[k], -model.base_torque_limit, model.base_torque_limit);
  }

  SystemState s = state;
  FkResult fk = forward_kinematics(model, s);
  MomentumDecomposition dec = decompose(model, fk);
  Vec3 h = dec.locked_inertia * s.base_omega + dec.coupling * s.qdot;
  const Vec3 com_ref = fk.system_com;

  const Vec6 qdot_start = s.qdot;
  const double dt_sub = dt / substeps;
  std::array<bool, 6> latched{};  // joint reached its angle limit this step

  for (int k = 0; k < substeps; ++k) {
    // attitude advances with the rate that is momentum-consistent at the
    // current configuration (explicit in the configuration, first order)
    s.base_attitude = UnitQuaternion::exp_rotation(s.base_omega * dt_sub) * s.base_attitude;

    // linear velocity ramp from qdot_start to the clipped command
    const double f0 = static_cast<double>(k) / substeps;
    const double f1 = static_cast<double>(k + 1) / substeps;
    for (int j = 0; j < 6; ++j) {
      if (latched[j]) continue;
      const double v0 = qdot_start[j] + (qdot_cmd[j] - qdot_start[j]) * f0;
      const double v1 = qdot_start[j] + (qdot_cmd[j] - qdot_start[j]) * f1;
      double qn = s.q[j] + 0.5 * (v0 + v1) * dt_sub;
      const auto& link = model.links[j];
      if (qn <= link.angle_min) {
        qn = link.angle_min;
        latched[j] = true;
      } else if (qn >= link.angle_max) {
        qn = link.angle_max;
        latched[j] = true;
      }
      s.q[j] = qn;
      s.qdot[j] = latched[j] ? 0.0 : v1;
    }

    h += tau * dt_sub;

    fk = forward_kinematics(model, s);
    dec = decompose(model, fk);
    s.base_omega = solve_base_rate(dec, h, s.qdot);

    // zero linear momentum: the system CoM must not move
    s.base_position += com_ref - fk.system_com;
  }

  s.t = state.t + 1;
  if (!s.all_finite()) throw NonFiniteStateError();
  return s;
}

Vec3 reaction_torque_probe(const SystemModel& model, const SystemState& state, const Vec6& qddot) {
  const double h = 1e-5;

  auto advance = [&](double sign) {
    SystemState s = state;
    s.q += sign * h * state.qdot;
    s.base_attitude = UnitQuaternion::exp_rotation(sign * h * state.base_omega) * s.base_attitude;
    return momentum_decomposition(model, s);
  };

  const MomentumDecomposition plus = advance(1.0);
  const MomentumDecomposition minus = advance(-1.0);
  const MomentumDecomposition cur = momentum_decomposition(model, state);

  const Mat3 a_dot = (plus.locked_inertia - minus.locked_inertia) / (2.0 * h);
  const Eigen::Matrix<double, 3, 6> b_dot = (plus.coupling - minus.coupling) / (2.0 * h);

  return -(b_dot * state.qdot + cur.coupling * qddot + a_dot * state.base_omega);
}

}  // namespace ff
