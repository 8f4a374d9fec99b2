#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "freeflyer/agent.hpp"
#include "freeflyer/env.hpp"
#include "freeflyer/priors.hpp"

namespace ff {

// Dual-agent off-policy clipped-surrogate training: TESG-gated collection,
// buffer-fill / K-step-update / flush cycle, GAE advantages, goal relabeling
// in early epochs.

struct TrainConfig {
  long buffer_transitions = 80000;  // C
  long minibatch = 8000;            // N
  long total_episodes = 240000;     // M
  int steps_per_episode = 50;       // T
  double gamma = 0.96;
  double lambda = 0.95;
  double clip_eps = 0.1;
  int k_update = 90;
  int her_epochs = 70;
  int guidance_epochs = 15;  // k_g
  double actor_lr = 2e-4;
  double critic_lr = 1e-4;
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  bool advantage_norm = true;
  bool use_tesg = true;
  bool use_her = true;
  int eval_cadence = 5;
  int eval_episodes = 200;
  int checkpoint_cadence = 10;

  int episodes_per_epoch() const {
    return static_cast<int>(buffer_transitions / steps_per_episode);
  }
  int epochs() const { return static_cast<int>(total_episodes / episodes_per_epoch()); }
};

/// Learned-policy selection probability p(k): 0.3 + 0.5 k / k_g up to k_g,
/// then 1 (guidance permanently off).
double tesg_probability(int k, int k_g = 15);

/// delta_t = r_t + gamma V_{t+1} - V_t; A_t = delta_t + gamma lambda A_{t+1}.
/// values has one bootstrap entry more than rewards. Returns (advantages,
/// returns = A + V).
std::pair<VecX, VecX> compute_gae(const VecX& rewards, const VecX& values, double gamma,
                                  double lambda);

/// One stored step: observation, executed action (normalized, pre-clip for
/// policy actions), the log density of that action under the collecting
/// policy, reward, and the action source.
struct Transition {
  VecX obs;
  VecX action;
  double log_prob = 0.0;
  double reward = 0.0;
  bool from_prior = false;
};

struct AgentEpisode {
  std::vector<Transition> steps;
  VecX final_obs;  // s_T bootstrap observation
};

struct Buffer {
  std::vector<AgentEpisode> episodes;
  long raw_transitions = 0;    // excludes relabeled extras
  long total_transitions = 0;  // includes relabeled extras
  mutable long reads = 0;      // update-isolation instrumentation

  void add(AgentEpisode ep, bool relabeled);
  void clear();
};

struct LearnerState {
  PpoAgent agent;
  MlpAdam actor_opt;
  MlpAdam critic_opt;
  AdamState log_std_opt;

  static LearnerState create(const AgentSpec& spec, Rng& rng);
};

struct UpdateDiagnostics {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  bool finite = true;
};

/// K_update iterations of minibatch clipped-surrogate / value regression over
/// the buffer. Advantages are computed once with the current critic and
/// normalized per buffer.
UpdateDiagnostics ppo_update(LearnerState& learner, const Buffer& buffer, const TrainConfig& cfg,
                             Rng& rng);

/// Full record of one collected episode, enough to replay it bit-exactly and
/// to relabel the manipulator side.
struct DualEpisode {
  TargetSpec target;
  AgentEpisode manip;
  AgentEpisode base;
  std::vector<Vec6> action_m_phys;
  std::vector<Vec3> action_b_phys;
  std::vector<Pose> ee_seq;    // size T+1, [0] at reset, expressed in the initial base frame
  std::vector<Vec6> q_seq;     // size T+1
  std::vector<Vec6> qdot_seq;  // size T+1
  std::vector<StepErrors> errors;
  long prior_steps = 0;
  bool manip_success = false;
};

/// Run one episode with TESG-gated dual actions. p_drl = 1 disables the prior
/// entirely (it is not even planned).
std::optional<DualEpisode> collect_episode(Env& env, const LearnerState& manip,
                                           const LearnerState& base, double p_drl,
                                           const ExpertConfig& expert_cfg, const TargetSpec& target,
                                           Rng rng);

/// Goal-relabeled copy of a failed episode: target replaced by the achieved
/// final ee pose, manipulator observations/rewards/log-densities recomputed
/// under the collecting policy. Base transitions are untouched by contract.
AgentEpisode her_relabel(const DualEpisode& episode, const PpoAgent& manip_agent,
                         const RewardConfig& reward_cfg, bool aln_signed);

struct EpochRow {
  int epoch = 0;
  int k = 0;
  double p_k = 0.0;
  long prior_steps = 0;
  long dropped_episodes = 0;
  double asr = std::nan("");
  double ape = std::nan("");
  double aoe = std::nan("");
  double abae = std::nan("");
  UpdateDiagnostics manip;
  UpdateDiagnostics base;
};

struct TrainResult {
  std::vector<EpochRow> rows;
  bool aborted = false;
  std::string abort_reason;
};

class Trainer {
 public:
  Trainer(const SystemModel& model, const EnvConfig& env_cfg, const TrainConfig& cfg,
          const ExpertConfig& expert_cfg, std::uint64_t seed);

  /// Full training loop; writes metrics.csv and checkpoints under out_dir
  /// (empty out_dir = no files). progress, when set, is called once per epoch.
  TrainResult run(const std::string& out_dir,
                  const std::function<void(const EpochRow&)>& progress = {});

  const LearnerState& manipulator() const { return manip_; }
  const LearnerState& base() const { return base_; }

 private:
  SystemModel model_;
  EnvConfig env_cfg_;
  TrainConfig cfg_;
  ExpertConfig expert_cfg_;
  std::uint64_t seed_;
  LearnerState manip_;
  LearnerState base_;
};

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const EpochRow& row);

}  // namespace ff
