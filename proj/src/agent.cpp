#include "freeflyer/agent.hpp"

#include "freeflyer/errors.hpp"

namespace ff {

// log sigma = -0.5 in physical arm units (0.607 rad/s), expressed over the
// normalized action box: ln(0.607 / 2.0)
constexpr double kLogStdInit = -1.1924349;

AgentSpec manipulator_agent_spec() {
  return {"manipulator", 41, 6, {256, 256, 128}, {256, 256, 128}, 2.0, kLogStdInit};
}

AgentSpec base_agent_spec() { return {"base", 15, 3, {32, 128, 32}, {32, 128, 32}, 0.1, kLogStdInit}; }

PpoAgent PpoAgent::create(const AgentSpec& spec, Rng& rng) {
  PpoAgent a;
  a.spec = spec;
  a.actor = Mlp::create(spec.obs_dim, spec.actor_hidden, spec.act_dim, rng, 0.01);
  a.critic = Mlp::create(spec.obs_dim, spec.critic_hidden, 1, rng, 1.0);
  a.head = GaussianPolicyHead::create(spec.act_dim, spec.bound, spec.log_std_init);
  return a;
}

VecX PpoAgent::actor_mean(const VecX& obs) const {
  return actor.forward(obs).array().tanh().matrix();
}

MatX PpoAgent::actor_mean_batch(const MatX& obs) const {
  return actor.forward_batch(obs).array().tanh().matrix();
}

std::pair<VecX, double> PpoAgent::sample(const VecX& obs, Rng& rng) const {
  const VecX mean = actor_mean(obs);
  VecX a = head.sample(mean, rng);
  return {a, head.log_prob(mean, a)};
}

double PpoAgent::value(const VecX& obs) const { return critic.forward(obs)[0]; }

namespace {

NamedTensor tensor(const std::string& name, const MatX& m) {
  NamedTensor t;
  t.name = name;
  t.shape = {m.rows(), m.cols()};
  t.data.assign(m.data(), m.data() + m.size());
  return t;
}

MatX untensor(const NamedTensor& t) {
  if (t.shape.size() != 2 ||
      static_cast<long>(t.data.size()) != t.shape[0] * t.shape[1]) {
    throw IoError("checkpoint tensor '" + t.name + "' has inconsistent shape");
  }
  MatX m(t.shape[0], t.shape[1]);
  std::copy(t.data.begin(), t.data.end(), m.data());
  return m;
}

}  // namespace

void PpoAgent::save(const std::string& path) const {
  CheckpointHeader h;
  h.agent_id = spec.id;
  h.actor_hidden = spec.actor_hidden;
  h.critic_hidden = spec.critic_hidden;
  h.obs_dim = spec.obs_dim;
  h.act_dim = spec.act_dim;
  h.bound = spec.bound;

  std::vector<NamedTensor> tensors;
  for (std::size_t l = 0; l < actor.weights.size(); ++l) {
    tensors.push_back(tensor("actor.w" + std::to_string(l), actor.weights[l]));
    tensors.push_back(tensor("actor.b" + std::to_string(l), actor.biases[l]));
  }
  for (std::size_t l = 0; l < critic.weights.size(); ++l) {
    tensors.push_back(tensor("critic.w" + std::to_string(l), critic.weights[l]));
    tensors.push_back(tensor("critic.b" + std::to_string(l), critic.biases[l]));
  }
  tensors.push_back(tensor("log_std", head.log_std));
  write_checkpoint(path, h, tensors);
}

PpoAgent PpoAgent::load(const std::string& path) {
  const auto [h, tensors] = read_checkpoint(path);
  PpoAgent a;
  a.spec =
      AgentSpec{h.agent_id, h.obs_dim, h.act_dim, h.actor_hidden, h.critic_hidden, h.bound, -0.5};

  auto find = [&tensors, &path](const std::string& name) -> const NamedTensor& {
    for (const auto& t : tensors) {
      if (t.name == name) return t;
    }
    throw IoError("checkpoint " + path + " is missing tensor '" + name + "'");
  };

  const std::size_t actor_layers = h.actor_hidden.size() + 1;
  const std::size_t critic_layers = h.critic_hidden.size() + 1;
  for (std::size_t l = 0; l < actor_layers; ++l) {
    a.actor.weights.push_back(untensor(find("actor.w" + std::to_string(l))));
    a.actor.biases.push_back(untensor(find("actor.b" + std::to_string(l))));
  }
  for (std::size_t l = 0; l < critic_layers; ++l) {
    a.critic.weights.push_back(untensor(find("critic.w" + std::to_string(l))));
    a.critic.biases.push_back(untensor(find("critic.b" + std::to_string(l))));
  }
  a.head.log_std = untensor(find("log_std"));
  a.head.bound = h.bound;
  return a;
}

}  // namespace ff
