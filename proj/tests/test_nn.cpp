#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "freeflyer/nn.hpp"

using namespace ff;

TEST_CASE("forward basics") {
  Rng rng(1);

  SUBCASE("zero weights give zero output") {
    Mlp net = Mlp::create(4, {8, 8}, 3, rng);
    for (auto& w : net.weights) w.setZero();
    for (auto& b : net.biases) b.setZero();
    const VecX y = net.forward(VecX::Ones(4));
    CHECK(y.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("one identity linear layer passes the input through") {
    Mlp net = Mlp::create(5, {}, 5, rng);
    net.weights[0] = MatX::Identity(5, 5);
    net.biases[0].setZero();
    VecX x(5);
    x << 1, -2, 3, 0.5, -0.25;
    CHECK((net.forward(x) - x).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("shape mismatch throws") {
    Mlp net = Mlp::create(4, {8}, 2, rng);
    CHECK_THROWS_AS(net.forward(VecX::Zero(5)), ShapeMismatchError);
  }

  SUBCASE("batched and single forward agree with an independent evaluator") {
    Mlp net = Mlp::create(6, {16, 8}, 4, rng);
    VecX x(6);
    for (int i = 0; i < 6; ++i) x[i] = rng.uniform(-1, 1);

    // straight-line evaluation, no shared code with Mlp::forward
    VecX a = x;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      VecX z = VecX::Zero(net.weights[l].rows());
      for (long r = 0; r < net.weights[l].rows(); ++r) {
        double acc = net.biases[l][r];
        for (long c = 0; c < net.weights[l].cols(); ++c) acc += net.weights[l](r, c) * a[c];
        z[r] = acc;
      }
      if (l + 1 < net.weights.size()) {
        for (long r = 0; r < z.size(); ++r) z[r] = std::tanh(z[r]);
      }
      a = z;
    }

    CHECK((net.forward(x) - a).cwiseAbs().maxCoeff() < 1e-12);
    const MatX xb = x;
    CHECK((net.forward_batch(xb).col(0) - a).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("parameter counts match hand-computed sizes") {
  Rng rng(2);
  // manipulator actor: 41 -> 256 -> 256 -> 128 -> 6
  const Mlp ma = Mlp::create(41, {256, 256, 128}, 6, rng);
  CHECK(ma.param_count() == (41 * 256 + 256) + (256 * 256 + 256) + (256 * 128 + 128) + (128 * 6 + 6));
  // base critic: 15 -> 32 -> 128 -> 32 -> 1
  const Mlp bc = Mlp::create(15, {32, 128, 32}, 1, rng);
  CHECK(bc.param_count() == (15 * 32 + 32) + (32 * 128 + 128) + (128 * 32 + 32) + (32 * 1 + 1));
}

TEST_CASE("gaussian head log density") {
  GaussianPolicyHead head = GaussianPolicyHead::create(1, 1.0, 0.0);  // sigma = 1

  SUBCASE("a = mu, sigma = 1, dim 1") {
    CHECK(head.log_prob(VecX::Zero(1), VecX::Zero(1)) ==
          doctest::Approx(-0.5 * std::log(2 * M_PI)).epsilon(1e-12));
  }

  SUBCASE("doubling sigma at the mean lowers log-prob by log 2 per dim") {
    GaussianPolicyHead wide = GaussianPolicyHead::create(3, 1.0, std::log(2.0));
    GaussianPolicyHead unit = GaussianPolicyHead::create(3, 1.0, 0.0);
    const VecX mu = VecX::Zero(3);
    CHECK(unit.log_prob(mu, mu) - wide.log_prob(mu, mu) ==
          doctest::Approx(3 * std::log(2.0)).epsilon(1e-12));
  }

  SUBCASE("gradient wrt mean vanishes at a = mu") {
    // (a - mu)/sigma^2 = 0 at a = mu; probe by finite difference of log_prob
    const VecX mu = VecX::Constant(1, 0.3);
    const double h = 1e-7;
    const double up = head.log_prob(VecX::Constant(1, 0.3 + h), mu);
    const double dn = head.log_prob(VecX::Constant(1, 0.3 - h), mu);
    CHECK(std::abs((up - dn) / (2 * h)) < 1e-6);
  }

  SUBCASE("physical clipping") {
    GaussianPolicyHead arm = GaussianPolicyHead::create(2, 2.0);
    VecX a(2);
    a << 1.4, -0.3;
    const VecX phys = arm.to_physical(a);
    CHECK(phys[0] == 2.0);
    CHECK(phys[1] == doctest::Approx(-0.6).epsilon(1e-12));
  }
}

TEST_CASE("backward: closed-form linear case") {
  Rng rng(3);
  Mlp net = Mlp::create(3, {}, 1, rng);
  VecX x(3);
  x << 0.5, -1.0, 2.0;
  const double target = 0.7;

  MlpCache cache;
  const MatX out = mlp_forward_cached(net, x, cache);
  const double yhat = out(0, 0);

  // squared loss L = (yhat - y)^2 -> dL/dyhat = 2 (yhat - y); dL/dW = that * x^T
  MlpGrads grads = MlpGrads::zeros_like(net);
  MatX dout(1, 1);
  dout(0, 0) = 2.0 * (yhat - target);
  mlp_backward(net, cache, dout, grads);
  const MatX expect = 2.0 * (yhat - target) * x.transpose();
  CHECK((grads.weights[0] - expect).cwiseAbs().maxCoeff() < 1e-12);

  // zero loss -> zero gradients
  MlpGrads zg = MlpGrads::zeros_like(net);
  mlp_backward(net, cache, MatX::Zero(1, 1), zg);
  CHECK(zg.weights[0].cwiseAbs().maxCoeff() == 0.0);
  CHECK(zg.biases[0].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward matches central finite differences on a probe net") {
  Rng rng(4);
  Mlp net = Mlp::create(5, {8, 8}, 2, rng);
  const int batch = 3;
  MatX x(5, batch);
  for (long i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
  MatX target(2, batch);
  for (long i = 0; i < target.size(); ++i) target.data()[i] = rng.uniform(-1, 1);

  auto loss = [&](const Mlp& n) {
    const MatX y = n.forward_batch(x);
    return (y - target).squaredNorm();
  };

  MlpCache cache;
  const MatX y = mlp_forward_cached(net, x, cache);
  MlpGrads grads = MlpGrads::zeros_like(net);
  mlp_backward(net, cache, 2.0 * (y - target), grads);

  const double h = 1e-5;
  double worst_rel = 0.0;
  int checked = 0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    for (long i = 0; i < net.weights[l].size(); ++i) {
      Mlp p = net, m = net;
      p.weights[l].data()[i] += h;
      m.weights[l].data()[i] -= h;
      const double fd = (loss(p) - loss(m)) / (2 * h);
      const double an = grads.weights[l].data()[i];
      worst_rel = std::max(worst_rel, std::abs(fd - an) / std::max(1e-8, std::abs(fd)));
      ++checked;
    }
    for (long i = 0; i < net.biases[l].size(); ++i) {
      Mlp p = net, m = net;
      p.biases[l][i] += h;
      m.biases[l][i] -= h;
      const double fd = (loss(p) - loss(m)) / (2 * h);
      const double an = grads.biases[l][i];
      worst_rel = std::max(worst_rel, std::abs(fd - an) / std::max(1e-8, std::abs(fd)));
      ++checked;
    }
  }
  CHECK(checked == net.param_count());
  CHECK(worst_rel < 1e-4);
}

TEST_CASE("adam update") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    AdamState s = AdamState::zeros(2, 2);
    MatX p = MatX::Ones(2, 2);
    const MatX before = p;
    s.update(p, MatX::Zero(2, 2), 1e-3);
    CHECK(p == before);
  }

  SUBCASE("first step from fresh state moves by lr * g / (|g| + eps)") {
    AdamState s = AdamState::zeros(1, 3);
    MatX p = MatX::Zero(1, 3);
    MatX g(1, 3);
    g << 0.5, -2.0, 1e-3;
    s.update(p, g, 2e-4);
    for (int i = 0; i < 3; ++i) {
      const double expect = -2e-4 * g(0, i) / (std::abs(g(0, i)) + 1e-8);
      CHECK(p(0, i) == doctest::Approx(expect).epsilon(1e-9));
    }
  }

  SUBCASE("determinism: identical runs produce identical parameters") {
    auto run = [] {
      Rng rng(9);
      Mlp net = Mlp::create(4, {8}, 2, rng);
      MlpAdam opt = MlpAdam::zeros_like(net);
      for (int it = 0; it < 25; ++it) {
        MatX x(4, 16);
        for (long i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
        MlpCache cache;
        const MatX y = mlp_forward_cached(net, x, cache);
        MlpGrads g = MlpGrads::zeros_like(net);
        mlp_backward(net, cache, y, g);  // drive outputs toward zero
        opt.update(net, g, 1e-3);
      }
      return net;
    };
    const Mlp a = run();
    const Mlp b = run();
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
      CHECK(a.weights[l] == b.weights[l]);
      CHECK(a.biases[l] == b.biases[l]);
    }
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(5);
  Mlp net = Mlp::create(7, {16, 8}, 3, rng);

  CheckpointHeader h;
  h.agent_id = "probe";
  h.actor_hidden = {16, 8};
  h.critic_hidden = {16, 8};
  h.obs_dim = 7;
  h.act_dim = 3;
  h.bound = 2.0;

  std::vector<NamedTensor> tensors;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    NamedTensor t;
    t.name = "w" + std::to_string(l);
    t.shape = {net.weights[l].rows(), net.weights[l].cols()};
    t.data.assign(net.weights[l].data(), net.weights[l].data() + net.weights[l].size());
    tensors.push_back(std::move(t));
  }

  const std::string path = "/tmp/ff_ckpt_test.bin";
  write_checkpoint(path, h, tensors);
  const auto [h2, t2] = read_checkpoint(path);
  CHECK(h2.agent_id == "probe");
  CHECK(h2.actor_hidden == h.actor_hidden);
  CHECK(h2.bound == 2.0);
  REQUIRE(t2.size() == tensors.size());
  for (std::size_t i = 0; i < t2.size(); ++i) {
    CHECK(t2[i].name == tensors[i].name);
    CHECK(t2[i].shape == tensors[i].shape);
    REQUIRE(t2[i].data.size() == tensors[i].data.size());
    for (std::size_t j = 0; j < t2[i].data.size(); ++j) CHECK(t2[i].data[j] == tensors[i].data[j]);
  }
  std::remove(path.c_str());
}
