#pragma once

#include <string>
#include <utility>
#include <vector>

#include "freeflyer/nn.hpp"

namespace ff {

struct AgentSpec {
  std::string id;
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<int> actor_hidden;
  std::vector<int> critic_hidden;
  double bound = 1.0;          // physical action bound
  double log_std_init = -0.5;  // in normalized action units
};

AgentSpec manipulator_agent_spec();  // 41 -> (256,256,128) -> 6, bound 2 rad/s
AgentSpec base_agent_spec();         // 15 -> (32,128,32) -> 3, bound 0.1 N*m

/// Actor-critic parameter bundle for one agent. The policy is a diagonal
/// Gaussian over normalized actions with mean tanh(actor(obs)).
struct PpoAgent {
  AgentSpec spec;
  Mlp actor;
  Mlp critic;
  GaussianPolicyHead head;

  static PpoAgent create(const AgentSpec& spec, Rng& rng);

  VecX actor_mean(const VecX& obs) const;
  MatX actor_mean_batch(const MatX& obs) const;

  /// Sampled normalized action (pre-clip) and its log density.
  std::pair<VecX, double> sample(const VecX& obs, Rng& rng) const;
  /// Physical action for a normalized one (clip then scale).
  VecX to_physical(const VecX& action_norm) const { return head.to_physical(action_norm); }

  double value(const VecX& obs) const;

  void save(const std::string& path) const;
  static PpoAgent load(const std::string& path);
};

}  // namespace ff
