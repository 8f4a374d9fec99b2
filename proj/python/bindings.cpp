#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "freeflyer/eval.hpp"
#include "freeflyer/run_config.hpp"
#include "freeflyer/selftest.hpp"
#include "freeflyer/trainer.hpp"

namespace py = pybind11;
using namespace ff;

namespace {

Mat3 quat_matrix(double w, double x, double y, double z) {
  return UnitQuaternion(w, x, y, z).to_matrix();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "spacecraft-manipulator planning simulator (C++ core)";

  py::register_exception<GimbalLockError>(m, "GimbalLockError");
  py::register_exception<NonFiniteStateError>(m, "NonFiniteStateError");
  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<IncompleteTraceError>(m, "IncompleteTraceError");

  // ---- geometry ----
  m.def("quat_to_matrix", &quat_matrix, py::arg("w"), py::arg("x"), py::arg("y"), py::arg("z"));
  m.def("matrix_to_quat", [](const Mat3& r) {
    const UnitQuaternion q = matrix_to_quat(r);
    return py::make_tuple(q.w, q.x, q.y, q.z);
  });
  m.def("geodesic_angle", &geodesic_angle);
  m.def("rot6d_encode", &rot6d_encode);
  m.def("rot6d_decode", &rot6d_decode);
  m.def("euler_zyx_from_matrix", [](const Mat3& r) {
    const EulerZYX e = euler_zyx_from_matrix(r);
    return py::make_tuple(e.roll, e.pitch, e.yaw);
  });

  py::class_<Pose>(m, "Pose")
      .def(py::init<>())
      .def_readwrite("rotation", &Pose::rotation)
      .def_readwrite("translation", &Pose::translation)
      .def("inverse", &Pose::inverse)
      .def("__mul__", &Pose::operator*);
  m.def("cpr_encode", &cpr_encode);

  // ---- model / dynamics ----
  py::class_<SystemModel>(m, "SystemModel")
      .def_readonly("name", &SystemModel::name)
      .def("total_mass", &SystemModel::total_mass)
      .def("checksum", [](const SystemModel& mm) { return model_checksum(mm); });
  m.def("default_system_model", &default_system_model);
  m.def("load_model_file", &load_model_file);
  m.def("save_model_file", &save_model_file);

  py::class_<SystemState>(m, "SystemState")
      .def(py::init<>())
      .def_property(
          "base_attitude",
          [](const SystemState& s) {
            return py::make_tuple(s.base_attitude.w, s.base_attitude.x, s.base_attitude.y,
                                  s.base_attitude.z);
          },
          [](SystemState& s, py::tuple t) {
            s.base_attitude = UnitQuaternion(t[0].cast<double>(), t[1].cast<double>(),
                                             t[2].cast<double>(), t[3].cast<double>());
          })
      .def_readwrite("base_omega", &SystemState::base_omega)
      .def_readwrite("base_position", &SystemState::base_position)
      .def_readwrite("q", &SystemState::q)
      .def_readwrite("qdot", &SystemState::qdot)
      .def_readwrite("t", &SystemState::t);

  py::class_<CommandInput>(m, "CommandInput")
      .def(py::init<>())
      .def_readwrite("qdot_cmd", &CommandInput::qdot_cmd)
      .def_readwrite("tau_b", &CommandInput::tau_b)
      .def_readwrite("tau_ext", &CommandInput::tau_ext);

  m.def("forward_kinematics", [](const SystemModel& model, const SystemState& s) {
    const FkResult fk = forward_kinematics(model, s);
    py::dict out;
    out["ee"] = fk.ee;
    out["system_com"] = fk.system_com;
    out["base"] = fk.base;
    return out;
  });
  m.def("jacobians", [](const SystemModel& model, const SystemState& s) {
    const Jacobians j = jacobians(model, s);
    return py::make_tuple(j.base, j.manipulator);
  });
  m.def("momentum_decomposition", [](const SystemModel& model, const SystemState& s) {
    const MomentumDecomposition d = momentum_decomposition(model, s);
    return py::make_tuple(d.locked_inertia, d.coupling);
  });
  m.def("angular_momentum", &angular_momentum_direct);
  m.def("step", &step, py::arg("model"), py::arg("state"), py::arg("cmd"), py::arg("dt") = 0.1,
        py::arg("substeps") = 10);
  m.def("reaction_torque_probe", &reaction_torque_probe);

  // ---- env ----
  py::class_<TargetSpec>(m, "TargetSpec")
      .def(py::init<>())
      .def_readwrite("position", &TargetSpec::position)
      .def_property(
          "orientation",
          [](const TargetSpec& t) {
            return py::make_tuple(t.orientation.w, t.orientation.x, t.orientation.y,
                                  t.orientation.z);
          },
          [](TargetSpec& t, py::tuple q) {
            t.orientation = UnitQuaternion(q[0].cast<double>(), q[1].cast<double>(),
                                           q[2].cast<double>(), q[3].cast<double>());
          })
      .def_readwrite("spin_rate", &TargetSpec::spin_rate)
      .def_readwrite("spin_axis", &TargetSpec::spin_axis);

  py::class_<RewardConfig>(m, "RewardConfig")
      .def(py::init<>())
      .def_readwrite("k_pos", &RewardConfig::k_pos)
      .def_readwrite("k_ori", &RewardConfig::k_ori)
      .def_readwrite("k_smth", &RewardConfig::k_smth)
      .def_readwrite("qdot_tol", &RewardConfig::qdot_tol)
      .def_readwrite("k_aln", &RewardConfig::k_aln)
      .def_readwrite("k_done_m", &RewardConfig::k_done_m)
      .def_readwrite("eps_pos", &RewardConfig::eps_pos)
      .def_readwrite("eps_ori", &RewardConfig::eps_ori)
      .def_readwrite("k_att", &RewardConfig::k_att)
      .def_readwrite("k_var", &RewardConfig::k_var)
      .def_readwrite("k_done_b", &RewardConfig::k_done_b)
      .def_readwrite("eps_att", &RewardConfig::eps_att);

  py::class_<FaultConfig>(m, "FaultConfig")
      .def(py::init<>())
      .def_readwrite("obs_delay_prob", &FaultConfig::obs_delay_prob)
      .def_readwrite("act_delay_prob", &FaultConfig::act_delay_prob)
      .def_readwrite("eff_base", &FaultConfig::eff_base)
      .def_readwrite("eff_manip", &FaultConfig::eff_manip)
      .def_readwrite("wheel_momentum0", &FaultConfig::wheel_momentum0)
      .def_readwrite("wheel_capacity", &FaultConfig::wheel_capacity)
      .def_readwrite("obs_bias_pos", &FaultConfig::obs_bias_pos)
      .def_readwrite("obs_bias_ori_angle", &FaultConfig::obs_bias_ori_angle)
      .def_readwrite("obs_bias_ori_axis", &FaultConfig::obs_bias_ori_axis)
      .def_readwrite("impulse_magnitude", &FaultConfig::impulse_magnitude)
      .def_readwrite("impulse_direction", &FaultConfig::impulse_direction)
      .def_readwrite("impulse_step", &FaultConfig::impulse_step)
      .def_readwrite("base_mass_scale", &FaultConfig::base_mass_scale);

  py::class_<EnvConfig>(m, "EnvConfig")
      .def(py::init<>())
      .def_readwrite("dt", &EnvConfig::dt)
      .def_readwrite("substeps", &EnvConfig::substeps)
      .def_readwrite("horizon", &EnvConfig::horizon)
      .def_readwrite("initial_q", &EnvConfig::initial_q)
      .def_readwrite("aln_signed", &EnvConfig::aln_signed)
      .def_readwrite("reward", &EnvConfig::reward);

  py::class_<StepErrors>(m, "StepErrors")
      .def(py::init<>())
      .def_readwrite("e_pos", &StepErrors::e_pos)
      .def_readwrite("e_ori", &StepErrors::e_ori)
      .def_readwrite("e_att", &StepErrors::e_att);

  py::class_<Env>(m, "Env")
      .def(py::init<const SystemModel&, const EnvConfig&>())
      .def("reset",
           [](Env& env, std::uint64_t seed) {
             const ObsPair obs = env.reset(Rng(seed));
             return py::make_tuple(obs.manip, obs.base);
           })
      .def("reset_with",
           [](Env& env, std::uint64_t seed, const TargetSpec& target, const FaultConfig& faults) {
             const ObsPair obs = env.reset(Rng(seed), target, faults);
             return py::make_tuple(obs.manip, obs.base);
           })
      .def("step",
           [](Env& env, const Vec6& am, const Vec3& ab) {
             const EnvStepResult res = env.step(am, ab);
             py::dict out;
             out["obs_manip"] = res.obs.manip;
             out["obs_base"] = res.obs.base;
             out["reward_manip"] = res.reward_manip.total;
             out["reward_base"] = res.reward_base.total;
             out["e_pos"] = res.errors.e_pos;
             out["e_ori"] = res.errors.e_ori;
             out["e_att"] = res.errors.e_att;
             out["episode_over"] = res.episode_over;
             out["failed"] = res.failed;
             return out;
           })
      .def("success", &Env::success)
      .def("state", &Env::state, py::return_value_policy::copy)
      .def("target_pose", &Env::target_pose)
      .def("ee_pose", &Env::ee_pose)
      .def("write_trace_csv", [](const Env& env) {
        std::ostringstream os;
        env.write_trace_csv(os);
        return os.str();
      });

  m.def("sample_target", [](std::uint64_t seed, const SystemModel& model) {
    Rng rng(seed);
    return sample_target(rng, model);
  });
  m.def(
      "success_monitor",
      [](const std::vector<StepErrors>& trace, double eps_pos, double eps_ori, double eps_att) {
        return success_monitor(trace, eps_pos, eps_ori, eps_att);
      },
      py::arg("trace"), py::arg("eps_pos") = 0.05, py::arg("eps_ori") = 0.1,
      py::arg("eps_att") = 0.05);

  // ---- priors ----
  py::class_<PidController>(m, "PidController")
      .def(py::init<>())
      .def("step", &PidController::step)
      .def("reset", &PidController::reset);

  m.def(
      "solve_ik",
      [](const SystemModel& model, const Pose& target, std::uint64_t seed, int seeds) {
        Rng rng(seed);
        return solve_ik(model, target, rng, seeds);
      },
      py::arg("model"), py::arg("target"), py::arg("seed") = 1, py::arg("seeds") = 8);

  py::class_<JointPath>(m, "JointPath")
      .def_readonly("waypoints", &JointPath::waypoints)
      .def_readonly("cost", &JointPath::cost);

  m.def(
      "rrt_star_plan",
      [](const SystemModel& model, const Vec6& start, const std::vector<Vec6>& goals,
         std::uint64_t seed, int budget) -> py::object {
        RrtParams params;
        params.budget = budget;
        Rng rng(seed);
        auto path = rrt_star_plan(model, start, goals, params, rng);
        if (!path) return py::none();
        return py::cast(*path);
      },
      py::arg("model"), py::arg("start"), py::arg("goals"), py::arg("seed") = 1,
      py::arg("budget") = 3000);

  // ---- learning ----
  m.def("tesg_probability", &tesg_probability, py::arg("k"), py::arg("k_g") = 15);
  m.def("compute_gae", [](const VecX& rewards, const VecX& values, double gamma, double lambda) {
    const auto [adv, ret] = compute_gae(rewards, values, gamma, lambda);
    return py::make_tuple(adv, ret);
  });

  py::class_<PpoAgent>(m, "PpoAgent")
      .def_static("load", &PpoAgent::load)
      .def("save", &PpoAgent::save)
      .def("actor_mean", &PpoAgent::actor_mean)
      .def("to_physical", &PpoAgent::to_physical)
      .def("value", &PpoAgent::value)
      .def_property_readonly("agent_id", [](const PpoAgent& a) { return a.spec.id; });

  // ---- eval ----
  py::class_<Aggregate>(m, "Aggregate")
      .def_readonly("asr", &Aggregate::asr)
      .def_readonly("ape", &Aggregate::ape)
      .def_readonly("aoe", &Aggregate::aoe)
      .def_readonly("abae", &Aggregate::abae);

  m.def(
      "evaluate_checkpoints",
      [](const SystemModel& model, const EnvConfig& env_cfg, const std::string& manip_path,
         const std::string& base_path, int episodes, std::uint64_t seed, int workers) {
        PolicyActorFactory factory{PpoAgent::load(manip_path), PpoAgent::load(base_path)};
        return evaluate_policy(model, env_cfg, factory, episodes, Rng(seed).substream("eval"),
                               workers);
      },
      py::arg("model"), py::arg("env_cfg"), py::arg("manip_checkpoint"),
      py::arg("base_checkpoint"), py::arg("episodes") = 200, py::arg("seed") = 1,
      py::arg("workers") = 1);

  m.def(
      "evaluate_expert",
      [](const SystemModel& model, const EnvConfig& env_cfg, int episodes, std::uint64_t seed,
         int workers, int rrt_budget) {
        ExpertConfig cfg;
        cfg.rrt.budget = rrt_budget;
        ActorFactory factory = [model, cfg] {
          return std::make_unique<ExpertEpisodeActor>(model, cfg);
        };
        return evaluate_policy(model, env_cfg, factory, episodes, Rng(seed).substream("eval"),
                               workers);
      },
      py::arg("model"), py::arg("env_cfg"), py::arg("episodes") = 100, py::arg("seed") = 1,
      py::arg("workers") = 1, py::arg("rrt_budget") = 1500);

  // ---- selftest ----
  m.def("selftest", [](const SystemModel& model) {
    py::list out;
    for (const auto& c : run_selftest(model)) {
      py::dict d;
      d["name"] = c.name;
      d["tolerance"] = c.tolerance;
      d["measured"] = c.measured;
      d["pass"] = c.pass;
      out.append(d);
    }
    return out;
  });

  m.attr("__version__") = "0.1.0";
}
