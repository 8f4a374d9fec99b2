#include "freeflyer/selftest.hpp"

#include <cmath>

#include "freeflyer/dynamics.hpp"
#include "freeflyer/nn.hpp"
#include "freeflyer/trainer.hpp"

namespace ff {

SelfCheck selftest_conservation(const SystemModel& model, int trials) {
  SelfCheck c{"free-float momentum conservation (50 steps, substeps=100)", "<= 1e-8 N*m*s", 0.0,
              false};
  Rng rng(20240);
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    SystemState s;
    s.base_attitude = random_rotation(rng);
    const Vec3 h0 = angular_momentum_direct(model, s);
    CommandInput cmd;
    for (int t = 0; t < 50; ++t) {
      for (int j = 0; j < 6; ++j) cmd.qdot_cmd[j] = rng.uniform(-2, 2);
      s = step(model, s, cmd, 0.1, 100);
    }
    worst = std::max(worst, (angular_momentum_direct(model, s) - h0).norm());
  }
  c.measured = worst;
  c.pass = worst <= 1e-8;
  return c;
}

SelfCheck selftest_gradients() {
  SelfCheck c{"probe-net gradient vs central finite differences", "rel err < 1e-4", 0.0, false};
  Rng rng(20241);
  Mlp net = Mlp::create(5, {8, 8}, 2, rng);
  MatX x(5, 4), target(2, 4);
  for (long i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
  for (long i = 0; i < target.size(); ++i) target.data()[i] = rng.uniform(-1, 1);

  auto loss = [&](const Mlp& n) { return (n.forward_batch(x) - target).squaredNorm(); };

  MlpCache cache;
  const MatX y = mlp_forward_cached(net, x, cache);
  MlpGrads grads = MlpGrads::zeros_like(net);
  mlp_backward(net, cache, 2.0 * (y - target), grads);

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    for (long i = 0; i < net.weights[l].size(); ++i) {
      Mlp p = net, m = net;
      p.weights[l].data()[i] += h;
      m.weights[l].data()[i] -= h;
      const double fd = (loss(p) - loss(m)) / (2 * h);
      worst = std::max(worst, std::abs(fd - grads.weights[l].data()[i]) /
                                  std::max(1e-8, std::abs(fd)));
    }
    for (long i = 0; i < net.biases[l].size(); ++i) {
      Mlp p = net, m = net;
      p.biases[l][i] += h;
      m.biases[l][i] -= h;
      const double fd = (loss(p) - loss(m)) / (2 * h);
      worst = std::max(worst, std::abs(fd - grads.biases[l][i]) / std::max(1e-8, std::abs(fd)));
    }
  }
  c.measured = worst;
  c.pass = worst < 1e-4;
  return c;
}

SelfCheck selftest_reward_oracle(const RewardConfig& cfg) {
  SelfCheck c{"reward hand-value oracles", "exact to 1e-12", 0.0, false};
  double worst = 0.0;
  auto record = [&](double got, double expect) {
    worst = std::max(worst, std::abs(got - expect));
  };

  {  // pose penalty 0.5*0.1 + 0.125*0.2 = 0.075
    ManipStepView prev{0.1, 0.2, Vec6::Zero()}, cur{0.1, 0.2, Vec6::Zero()};
    record(reward_manipulator(prev, cur, cfg).pose_penalty, 0.075);
  }
  {  // completion reward at zero error = 0.2; zero at thresholds
    ManipStepView zero{0.0, 0.0, Vec6::Zero()};
    record(reward_manipulator(zero, zero, cfg).done_reward, 0.2);
    ManipStepView at{0.05, 0.1, Vec6::Zero()};
    record(reward_manipulator(at, at, cfg).done_reward, 0.0);
  }
  {  // L1 attitude reduction term 0.35 - 0.20 = 0.15, scaled by k_var = 2.5
    BaseStepView prev{0.0, EulerZYX{0.1, -0.2, 0.05}};
    BaseStepView cur{0.0, EulerZYX{0.05, -0.1, 0.05}};
    record(reward_base(prev, cur, cfg).var_reward, 0.375);
  }
  {  // base completion at zero attitude error
    BaseStepView zero{0.0, EulerZYX{}};
    record(reward_base(zero, zero, cfg).total, 0.2);
  }
  c.measured = worst;
  c.pass = worst <= 1e-12;
  return c;
}

SelfCheck selftest_schedule() {
  SelfCheck c{"TESG schedule table k=0..20", "exact", 0.0, false};
  double worst = 0.0;
  for (int k = 0; k <= 20; ++k) {
    const double expect = k <= 15 ? 0.3 + 0.5 * k / 15.0 : 1.0;
    worst = std::max(worst, std::abs(tesg_probability(k) - expect));
  }
  worst = std::max(worst, std::abs(tesg_probability(15) - 0.8));
  worst = std::max(worst, std::abs(tesg_probability(16) - 1.0));
  c.measured = worst;
  c.pass = worst == 0.0;
  return c;
}

std::vector<SelfCheck> run_selftest(const SystemModel& model) {
  return {selftest_conservation(model), selftest_gradients(),
          selftest_reward_oracle(RewardConfig{}), selftest_schedule()};
}

}  // namespace ff
