#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "freeflyer/agent.hpp"
#include "freeflyer/env.hpp"
#include "freeflyer/priors.hpp"

namespace ff {

// Evaluation metrics over the final-10-step window of 50-step episodes, and
// the robustness campaign runner (one named fault active per scenario, all
// others nominal, no fine-tuning).

struct EpisodeMetrics {
  std::vector<StepErrors> trace;
  bool success = false;
  double window_pos = 0.0;
  double window_ori = 0.0;
  double window_att = 0.0;
};

/// Window means over steps 40..49 of a >= 50-step error trace; success via
/// the standard monitor. Throws IncompleteTraceError on short traces.
EpisodeMetrics episode_metrics(std::vector<StepErrors> trace);

struct Aggregate {
  double asr = 0.0;
  double ape = 0.0;
  double aoe = 0.0;
  double abae = 0.0;
};

Aggregate aggregate(const std::vector<EpisodeMetrics>& episodes);

/// Per-episode controller. begin_episode is called right after env.reset.
class EpisodeActor {
 public:
  virtual ~EpisodeActor() = default;
  virtual void begin_episode(const Env& env, Rng rng) { (void)env, (void)rng; }
  virtual std::pair<Vec6, Vec3> act(const ObsPair& obs, const Env& env) = 0;
};

/// Deterministic mean-action policy from trained agents.
class PolicyEpisodeActor : public EpisodeActor {
 public:
  PolicyEpisodeActor(PpoAgent manip, PpoAgent base)
      : manip_(std::move(manip)), base_(std::move(base)) {}
  std::pair<Vec6, Vec3> act(const ObsPair& obs, const Env& env) override;

 private:
  PpoAgent manip_;
  PpoAgent base_;
};

/// RRT* + PID expert (plans per episode in begin_episode).
class ExpertEpisodeActor : public EpisodeActor {
 public:
  ExpertEpisodeActor(SystemModel model, ExpertConfig cfg, bool base_control = true)
      : model_(std::move(model)), cfg_(std::move(cfg)), base_control_(base_control) {}
  void begin_episode(const Env& env, Rng rng) override;
  std::pair<Vec6, Vec3> act(const ObsPair& obs, const Env& env) override;

 private:
  SystemModel model_;
  ExpertConfig cfg_;
  bool base_control_;
  std::optional<ExpertPolicy> policy_;
};

/// Free-floating baseline: zero joint commands and zero base torque, or the
/// expert arm with tau_b = 0 when an expert config is given.
class ZeroEpisodeActor : public EpisodeActor {
 public:
  std::pair<Vec6, Vec3> act(const ObsPair&, const Env&) override {
    return {Vec6::Zero(), Vec3::Zero()};
  }
};

/// Actors are stateful per episode; campaigns spawn one per worker through a
/// factory so parallel evaluation stays deterministic.
using ActorFactory = std::function<std::unique_ptr<EpisodeActor>()>;

struct PolicyActorFactory {
  PpoAgent manip;
  PpoAgent base;
  std::unique_ptr<EpisodeActor> operator()() const {
    return std::make_unique<PolicyEpisodeActor>(manip, base);
  }
};

struct SuccessThresholds {
  double eps_pos = 0.05;
  double eps_ori = 0.1;
  double eps_att = 0.05;
};

struct EvalOptions {
  int episodes = 1000;
  int workers = 1;
  SuccessThresholds thresholds;
  std::string stream_label = "eval";
};

/// N nominal episodes with mean actions; per-episode substreams make the
/// result independent of worker count and execution order.
Aggregate evaluate_policy(const SystemModel& model, const EnvConfig& env_cfg,
                          const ActorFactory& factory, int episodes, Rng master, int workers,
                          const SuccessThresholds& thresholds = {},
                          std::vector<EpisodeMetrics>* out_metrics = nullptr);

inline Aggregate evaluate_policy(const SystemModel& model, const EnvConfig& env_cfg,
                                 const PolicyActorFactory& factory, int episodes, Rng master,
                                 int workers) {
  return evaluate_policy(model, env_cfg, ActorFactory([factory] { return factory(); }), episodes,
                         master, workers);
}

/// Robustness scenario grid: one named fault dimension swept over `grid`,
/// `episodes_per_seed` episodes per grid point per seed.
struct ScenarioConfig {
  std::string name;
  std::vector<double> grid;
  int episodes_per_seed = 200;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
};

extern const std::vector<std::string> kScenarioNames;
bool is_known_scenario(const std::string& name);

/// Grid value at which a scenario is exactly nominal (1.0 for base-mass,
/// 0.0 for everything else). Nominal points skip fault instantiation so they
/// reproduce plain evaluation bit-exactly.
double scenario_nominal_value(const std::string& name);

/// Instantiate the per-episode fault/target knobs for one scenario value.
void apply_scenario(const std::string& name, double value, Rng& rng, TargetSpec& target,
                    FaultConfig& faults);

struct CampaignPoint {
  double param = 0.0;
  std::vector<Aggregate> per_seed;
  Aggregate mean;
  Aggregate stddev;
};

std::vector<CampaignPoint> run_scenario(const SystemModel& model, const EnvConfig& env_cfg,
                                        const ActorFactory& factory, const ScenarioConfig& scenario,
                                        int workers = 1,
                                        const SuccessThresholds& thresholds = {});

/// Plot-data export: one row per grid point with mean and std columns; parses
/// back exactly.
void write_campaign_csv(std::ostream& os, const ScenarioConfig& scenario,
                        const std::vector<CampaignPoint>& points);
std::vector<CampaignPoint> read_campaign_csv(std::istream& is);

}  // namespace ff
