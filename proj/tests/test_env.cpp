#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "freeflyer/env.hpp"
#include "freeflyer/selftest.hpp"

using namespace ff;

namespace {
const SystemModel& model() {
  static const SystemModel m = default_system_model();
  return m;
}
}  // namespace

TEST_CASE("manipulator reward hand values") {
  const RewardConfig cfg;

  SUBCASE("pose penalty 0.5*0.1 + 0.125*0.2 = 0.075") {
    ManipStepView prev{0.1, 0.2, Vec6::Zero()};
    ManipStepView cur{0.1, 0.2, Vec6::Zero()};
    const auto r = reward_manipulator(prev, cur, cfg);
    CHECK(r.pose_penalty == doctest::Approx(0.075).epsilon(1e-12));
    CHECK(r.smooth_penalty == 0.0);
    CHECK(r.align_reward == 0.0);
  }

  SUBCASE("completion reward at zero error is 0.1*(1+1) = 0.2") {
    ManipStepView prev{0.0, 0.0, Vec6::Zero()};
    ManipStepView cur{0.0, 0.0, Vec6::Zero()};
    const auto r = reward_manipulator(prev, cur, cfg);
    CHECK(r.done_reward == doctest::Approx(0.2).epsilon(1e-12));
  }

  SUBCASE("completion reward vanishes exactly at the thresholds") {
    ManipStepView prev{cfg.eps_pos, cfg.eps_ori, Vec6::Zero()};
    ManipStepView cur{cfg.eps_pos, cfg.eps_ori, Vec6::Zero()};
    CHECK(reward_manipulator(prev, cur, cfg).done_reward == 0.0);
  }

  SUBCASE("smoothness penalty only above the tolerance") {
    ManipStepView prev{0.3, 0.3, Vec6::Zero()};
    ManipStepView cur{0.3, 0.3, Vec6::Zero()};
    cur.qdot[0] = 1.9;  // |dq| = 1.9 < 2 -> free
    CHECK(reward_manipulator(prev, cur, cfg).smooth_penalty == 0.0);
    cur.qdot[0] = 3.0;  // |dq| = 3 -> 0.1 * (3 - 2)
    CHECK(reward_manipulator(prev, cur, cfg).smooth_penalty == doctest::Approx(0.1).epsilon(1e-12));
  }

  SUBCASE("alignment reward is literal |delta| unless the signed switch is set") {
    ManipStepView prev{0.3, 0.5, Vec6::Zero()};
    ManipStepView cur{0.3, 0.7, Vec6::Zero()};  // error increased by 0.2
    CHECK(reward_manipulator(prev, cur, cfg, false).align_reward ==
          doctest::Approx(0.15 * 0.2).epsilon(1e-12));
    CHECK(reward_manipulator(prev, cur, cfg, true).align_reward == 0.0);
    std::swap(prev.e_ori, cur.e_ori);  // error decreased
    CHECK(reward_manipulator(prev, cur, cfg, true).align_reward ==
          doctest::Approx(0.15 * 0.2).epsilon(1e-12));
  }
}

TEST_CASE("base reward hand values") {
  const RewardConfig cfg;

  SUBCASE("L1 reduction term: 0.35 - 0.20 = 0.15") {
    BaseStepView prev{0.0, EulerZYX{0.1, -0.2, 0.05}};
    BaseStepView cur{0.0, EulerZYX{0.05, -0.1, 0.05}};
    const auto r = reward_base(prev, cur, cfg);
    // e_att terms cancel (both zero); var = k_var * (0 + 0.15)
    CHECK(r.var_reward == doctest::Approx(2.5 * 0.15).epsilon(1e-12));
  }

  SUBCASE("zero attitude error earns the full completion reward") {
    BaseStepView prev{0.0, EulerZYX{}};
    BaseStepView cur{0.0, EulerZYX{}};
    const auto r = reward_base(prev, cur, cfg);
    CHECK(r.done_reward == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(r.total == doctest::Approx(0.2).epsilon(1e-12));
  }

  SUBCASE("completion term zero at the threshold") {
    BaseStepView prev{cfg.eps_att, EulerZYX{}};
    BaseStepView cur{cfg.eps_att, EulerZYX{}};
    CHECK(reward_base(prev, cur, cfg).done_reward == 0.0);
  }
}

TEST_CASE("reward totals equal the sum of their components") {
  Rng rng(61);
  const RewardConfig cfg;
  for (int i = 0; i < 200; ++i) {
    ManipStepView mp{rng.uniform(0, 2), rng.uniform(0, M_PI), Vec6::Zero()};
    ManipStepView mc{rng.uniform(0, 2), rng.uniform(0, M_PI), Vec6::Zero()};
    for (int j = 0; j < 6; ++j) {
      mp.qdot[j] = rng.uniform(-2, 2);
      mc.qdot[j] = rng.uniform(-2, 2);
    }
    const auto rm = reward_manipulator(mp, mc, cfg);
    CHECK(std::abs(rm.total - (-rm.pose_penalty - rm.smooth_penalty + rm.align_reward +
                               rm.done_reward)) < 1e-12);

    BaseStepView bp{rng.uniform(0, 0.5),
                    EulerZYX{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)}};
    BaseStepView bc{rng.uniform(0, 0.5),
                    EulerZYX{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)}};
    const auto rb = reward_base(bp, bc, cfg);
    CHECK(std::abs(rb.total - (-rb.att_penalty + rb.var_reward + rb.done_reward)) < 1e-12);
  }
}

TEST_CASE("per-step rewards respect the closed-form worst case") {
  // reach bound: mount + chain + ee offsets; target within mount + outer radius
  const SystemModel& m = model();
  double reach = m.ee_offset.translation.norm();
  for (const auto& l : m.links) reach += l.origin.translation.norm();
  const double d_max = (m.mount.translation.norm() + reach) +
                       (m.mount.translation.norm() + kWorkspaceOuterRadius);
  const RewardConfig cfg;
  const double rm_bound = (cfg.k_pos * d_max + cfg.k_ori * M_PI) + cfg.k_smth * 6 * (4.0 - cfg.qdot_tol) +
                          cfg.k_aln * M_PI + 2 * cfg.k_done_m;
  const double rb_bound = cfg.k_att * M_PI + cfg.k_var * (M_PI + 2 * 3 * M_PI) + cfg.k_done_b;

  Env env(m, EnvConfig{});
  Rng rng(67);
  for (int ep = 0; ep < 5; ++ep) {
    env.reset(rng.substream("ep", ep));
    for (int t = 0; t < 50; ++t) {
      Vec6 am;
      for (int j = 0; j < 6; ++j) am[j] = rng.uniform(-2, 2);
      const Vec3 ab(rng.uniform(-.1, .1), rng.uniform(-.1, .1), rng.uniform(-.1, .1));
      const auto res = env.step(am, ab);
      REQUIRE(!res.failed);
      CHECK(std::isfinite(res.reward_manip.total));
      CHECK(std::isfinite(res.reward_base.total));
      CHECK(std::abs(res.reward_manip.total) <= rm_bound);
      CHECK(std::abs(res.reward_base.total) <= rb_bound);
    }
  }
}

TEST_CASE("observation dimensions and exact-match encoding") {
  CHECK(ObsManip{}.size() == 41);
  CHECK(ObsBase{}.size() == 15);

  // ee exactly at target -> identity relative pose, zero errors
  Pose p{quat_to_matrix(UnitQuaternion::from_axis_angle(Vec3(1, 1, 0), 0.7)), Vec3(0.3, -0.2, 0.5)};
  const ObsManip o = Env::manipulator_observation(p, p, Vec6::Zero(), Vec6::Zero());
  Cpr expect_id;
  expect_id << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  CHECK((o.segment<9>(18) - expect_id).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(o[27] == 0.0);
  CHECK(o[28] < 1e-7);
}

TEST_CASE("target sampling covers the hollow hemisphere uniformly in volume") {
  Rng rng(71);
  const int n = 10000;
  double min_r = 1e9, max_r = 0.0, sum_r3 = 0.0;
  Mat3 mean_rot = Mat3::Zero();
  const Vec3 mount = model().mount.translation;
  for (int i = 0; i < n; ++i) {
    const TargetSpec t = sample_target(rng, model());
    const double r = (t.position - mount).norm();
    min_r = std::min(min_r, r);
    max_r = std::max(max_r, r);
    sum_r3 += r * r * r;
    CHECK((t.position - mount).z() >= 0.0);
    mean_rot += t.orientation.to_matrix();
  }
  CHECK(min_r >= 0.25);
  CHECK(max_r <= 0.65);

  const double a3 = 0.25 * 0.25 * 0.25, b3 = 0.65 * 0.65 * 0.65;
  const double expect = (a3 + b3) / 2.0;
  const double sigma = (b3 - a3) / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(sum_r3 / n - expect) < 3 * sigma);

  mean_rot /= n;
  const double sigma_rot = std::sqrt(1.0 / 3.0 / n);
  CHECK(mean_rot.cwiseAbs().maxCoeff() < 3 * sigma_rot);
}

TEST_CASE("success monitor boundary behavior") {
  std::vector<StepErrors> trace(50, StepErrors{1.0, 1.0, 1.0});

  SUBCASE("all good in steps 40-49 succeeds") {
    for (int t = 40; t < 50; ++t) trace[t] = {0.0, 0.0, 0.0};
    CHECK(success_monitor(trace));
  }
  SUBCASE("9 consecutive is not enough") {
    for (int t = 41; t < 50; ++t) trace[t] = {0.0, 0.0, 0.0};
    CHECK(!success_monitor(trace));
  }
  SUBCASE("a single dip above threshold resets the run") {
    for (int t = 40; t < 50; ++t) trace[t] = {0.0, 0.0, 0.0};
    trace[45].e_pos = 0.051;
    CHECK(!success_monitor(trace));
  }
  SUBCASE("scaling all errors by 0.999 never flips success off") {
    Rng rng(73);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<StepErrors> tr(50);
      for (auto& e : tr) {
        e = {rng.uniform(0, 0.1), rng.uniform(0, 0.2), rng.uniform(0, 0.1)};
      }
      const bool before = success_monitor(tr);
      for (auto& e : tr) {
        e.e_pos *= 0.999;
        e.e_ori *= 0.999;
        e.e_att *= 0.999;
      }
      if (before) CHECK(success_monitor(tr));
    }
  }
}

TEST_CASE("fault-off environment is bit-identical to raw dynamics stepping") {
  Env env(model(), EnvConfig{});
  Rng rng(79);

  for (int ep = 0; ep < 100; ++ep) {
    Rng ep_rng = rng.substream("ep", ep);
    env.reset(ep_rng);
    SystemState shadow = env.state();
    Rng act_rng = rng.substream("act", ep);
    for (int t = 0; t < 50; ++t) {
      Vec6 am;
      for (int j = 0; j < 6; ++j) am[j] = act_rng.uniform(-2.5, 2.5);
      Vec3 ab(act_rng.uniform(-0.2, 0.2), act_rng.uniform(-0.2, 0.2), act_rng.uniform(-0.2, 0.2));
      env.step(am, ab);

      CommandInput cmd;
      for (int j = 0; j < 6; ++j) cmd.qdot_cmd[j] = std::clamp(am[j], -2.0, 2.0);
      for (int k = 0; k < 3; ++k) cmd.tau_b[k] = std::clamp(ab[k], -0.1, 0.1);
      shadow = ff::step(model(), shadow, cmd, 0.1, 10);

      CHECK(env.state().q == shadow.q);
      CHECK(env.state().qdot == shadow.qdot);
      CHECK(env.state().base_omega == shadow.base_omega);
      CHECK(env.state().base_position == shadow.base_position);
      CHECK(env.state().base_attitude.w == shadow.base_attitude.w);
      CHECK(env.state().base_attitude.x == shadow.base_attitude.x);
    }
  }
}

TEST_CASE("observation delay with probability one freezes the observation") {
  Env env(model(), EnvConfig{});
  FaultConfig f;
  f.obs_delay_prob = 1.0;
  Rng rng(83);
  TargetSpec target = sample_target(rng, model());
  env.reset(rng, target, f);

  Vec6 am = Vec6::Constant(0.5);
  ObsPair first = env.step(am, Vec3::Zero()).obs;   // step 1: fresh
  ObsPair second = env.step(am, Vec3::Zero()).obs;  // step 2: frozen copy of step 1
  CHECK(second.manip == first.manip);
  CHECK(second.base == first.base);
  ObsPair third = env.step(am, Vec3::Zero()).obs;
  CHECK(third.manip == first.manip);
}

TEST_CASE("action delay with probability one repeats the first action") {
  Env env(model(), EnvConfig{});
  FaultConfig f;
  f.act_delay_prob = 1.0;
  Rng rng(89);
  env.reset(rng, sample_target(rng, model()), f);

  Vec6 a1 = Vec6::Constant(1.0);
  env.step(a1, Vec3::Zero());
  const Vec6 qdot_after_1 = env.state().qdot;
  env.step(Vec6::Constant(-2.0), Vec3::Zero());  // replaced by a1
  CHECK(env.state().qdot == qdot_after_1);
}

TEST_CASE("initial observation bias decays linearly to zero at step 30") {
  Env env(model(), EnvConfig{});
  FaultConfig f;
  f.obs_bias_pos = Vec3(0.12, 0, 0);
  Rng rng(97);
  TargetSpec target = sample_target(rng, model());
  env.reset(rng, target, f);

  ObsPair obs;
  for (int t = 1; t <= 40; ++t) obs = env.step(Vec6::Zero(), Vec3::Zero()).obs;

  // after step 30 the bias is gone
  const Vec3 tar_obs_40 = obs.manip.segment<3>(9);
  CHECK((tar_obs_40 - target.position).norm() < 1e-12);

  // at t = 15 the offset is 0.12 * (1 - 15/30) = 0.06
  env.reset(rng, target, f);
  for (int t = 1; t <= 15; ++t) obs = env.step(Vec6::Zero(), Vec3::Zero()).obs;
  const Vec3 tar_obs_15 = obs.manip.segment<3>(9);
  CHECK(std::abs((tar_obs_15 - target.position).x() - 0.06) < 1e-12);
}

TEST_CASE("manipulator efficiency attenuates the executed command") {
  Env env(model(), EnvConfig{});
  FaultConfig f;
  f.eff_manip = 0.5;
  Rng rng(101);
  env.reset(rng, sample_target(rng, model()), f);
  Vec6 am = Vec6::Zero();
  am[0] = 2.0;
  env.step(am, Vec3::Zero());
  CHECK(env.state().qdot[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("wheel momentum saturation") {
  Env env(model(), EnvConfig{});
  Rng rng(103);

  SUBCASE("axis at capacity blocks positive torque") {
    FaultConfig f;
    f.wheel_momentum0 = Vec3(3.0, 0, 0);
    env.reset(rng, sample_target(rng, model()), f);
    env.step(Vec6::Zero(), Vec3(0.1, 0, 0));
    CHECK(env.trace().back().tau_applied[0] == 0.0);
  }

  SUBCASE("full saturation applies zero torque on every step either way") {
    FaultConfig f;
    f.wheel_momentum0 = Vec3(3.0, 3.0, 3.0);
    env.reset(rng, sample_target(rng, model()), f);
    for (int t = 0; t < 50; ++t) {
      const Vec3 ab(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
      env.step(Vec6::Zero(), ab);
      CHECK(env.trace().back().tau_applied.norm() == 0.0);
    }
  }

  SUBCASE("nominal bookkeeping never interferes within an episode") {
    env.reset(rng, sample_target(rng, model()), FaultConfig{});
    for (int t = 0; t < 50; ++t) {
      env.step(Vec6::Zero(), Vec3(0.1, 0.1, 0.1));
      CHECK(env.trace().back().tau_applied == Vec3(0.1, 0.1, 0.1));
    }
  }
}

TEST_CASE("impulse disturbance fires on exactly one step") {
  Env env(model(), EnvConfig{});
  FaultConfig f;
  f.impulse_magnitude = 5.0;
  f.impulse_direction = Vec3::UnitZ();
  f.impulse_step = 10;
  Rng rng(107);
  env.reset(rng, sample_target(rng, model()), f);

  double w_before = 0, h_after = 0, h_after2 = 0;
  for (int t = 1; t <= 12; ++t) {
    env.step(Vec6::Zero(), Vec3::Zero());
    if (t == 9) w_before = env.state().base_omega.norm();
    if (t == 10) h_after = angular_momentum_direct(env.model(), env.state()).norm();
    if (t == 11) h_after2 = angular_momentum_direct(env.model(), env.state()).norm();
  }
  CHECK(w_before == 0.0);
  CHECK(h_after == doctest::Approx(5.0 * 0.1).epsilon(1e-9));  // magnitude * dt
  CHECK(h_after2 == doctest::Approx(h_after).epsilon(1e-9));   // no further kicks
}

TEST_CASE("trace export has one row per step with stable header") {
  Env env(model(), EnvConfig{});
  Rng rng(109);
  env.reset(rng);
  for (int t = 0; t < 5; ++t) env.step(Vec6::Constant(0.1), Vec3::Zero());
  std::ostringstream os;
  env.write_trace_csv(os);
  const std::string text = os.str();
  CHECK(text.substr(0, 5) == "t,q1,");
  CHECK(std::count(text.begin(), text.end(), '\n') == 6);  // header + 5 rows
}

TEST_CASE("selftest reward oracle trips on a mutated coefficient") {
  CHECK(selftest_reward_oracle(RewardConfig{}).pass);
  RewardConfig mutated;
  mutated.k_pos = -0.5;  // sign flip on the position-error weight
  CHECK(!selftest_reward_oracle(mutated).pass);
  RewardConfig scaled;
  scaled.k_done_b = 0.25;
  CHECK(!selftest_reward_oracle(scaled).pass);
}
