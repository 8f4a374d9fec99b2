#include "freeflyer/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <atomic>
#include <thread>

#include "freeflyer/errors.hpp"

namespace ff {

EpisodeMetrics episode_metrics(std::vector<StepErrors> trace) {
  if (trace.size() < 50) {
    throw IncompleteTraceError("episode_metrics: need a complete 50-step trace, got " +
                               std::to_string(trace.size()));
  }
  EpisodeMetrics m;
  m.success = success_monitor(trace);
  double sp = 0, so = 0, sa = 0;
  for (int t = 40; t < 50; ++t) {
    sp += trace[t].e_pos;
    so += trace[t].e_ori;
    sa += trace[t].e_att;
  }
  m.window_pos = sp / 10.0;
  m.window_ori = so / 10.0;
  m.window_att = sa / 10.0;
  m.trace = std::move(trace);
  return m;
}

Aggregate aggregate(const std::vector<EpisodeMetrics>& episodes) {
  Aggregate a;
  if (episodes.empty()) return a;
  for (const auto& e : episodes) {
    a.asr += e.success ? 1.0 : 0.0;
    a.ape += e.window_pos;
    a.aoe += e.window_ori;
    a.abae += e.window_att;
  }
  const double n = static_cast<double>(episodes.size());
  a.asr /= n;
  a.ape /= n;
  a.aoe /= n;
  a.abae /= n;
  return a;
}

std::pair<Vec6, Vec3> PolicyEpisodeActor::act(const ObsPair& obs, const Env&) {
  const VecX am = manip_.to_physical(manip_.actor_mean(obs.manip));
  const VecX ab = base_.to_physical(base_.actor_mean(obs.base));
  return {Vec6(am), Vec3(ab)};
}

void ExpertEpisodeActor::begin_episode(const Env& env, Rng rng) {
  policy_.emplace(model_, cfg_, env.target_pose(), env.config().initial_q, rng);
}

std::pair<Vec6, Vec3> ExpertEpisodeActor::act(const ObsPair&, const Env& env) {
  const Vec6 am = policy_ ? policy_->manipulator_action(env.state().q, env.step_index())
                          : Vec6::Zero().eval();
  Vec3 ab = Vec3::Zero();
  if (policy_ && base_control_) {
    const Mat3 rel = env.state().base_attitude.to_matrix();  // initial attitude is identity
    ab = policy_->base_action(rel, Mat3::Identity());
  }
  return {am, ab};
}

namespace {

EpisodeMetrics run_episode(const SystemModel& model, const EnvConfig& env_cfg,
                           EpisodeActor& actor, const TargetSpec& target,
                           const FaultConfig& faults, Rng rng,
                           const SuccessThresholds& thresholds) {
  Env env(model, env_cfg);
  ObsPair obs = env.reset(rng.substream("env"), target, faults);
  actor.begin_episode(env, rng.substream("actor"));
  for (int t = 0; t < env_cfg.horizon; ++t) {
    const auto [am, ab] = actor.act(obs, env);
    const EnvStepResult res = env.step(am, ab);
    if (res.failed) {
      // voided episode scores as a failure with a saturated trace
      std::vector<StepErrors> bad(50, StepErrors{1e3, M_PI, M_PI});
      return episode_metrics(std::move(bad));
    }
    obs = res.obs;
  }
  std::vector<StepErrors> trace = env.error_trace();
  EpisodeMetrics m = episode_metrics(std::move(trace));
  m.success = success_monitor(m.trace, thresholds.eps_pos, thresholds.eps_ori, thresholds.eps_att);
  return m;
}

}  // namespace

Aggregate evaluate_policy(const SystemModel& model, const EnvConfig& env_cfg,
                          const ActorFactory& factory, int episodes, Rng master, int workers,
                          const SuccessThresholds& thresholds,
                          std::vector<EpisodeMetrics>* out_metrics) {
  std::vector<EpisodeMetrics> metrics(episodes);
  const int n_workers = std::max(1, std::min(workers, episodes));

  // one actor per worker thread; the episode index keys the rng so worker
  // count and scheduling cannot change results
  std::vector<std::unique_ptr<EpisodeActor>> actors;
  for (int w = 0; w < n_workers; ++w) actors.push_back(factory());

  std::atomic<int> next{0};
  auto worker_fn = [&](int w) {
    EpisodeActor& actor = *actors[w];
    for (int i = next.fetch_add(1); i < episodes; i = next.fetch_add(1)) {
      Rng ep_rng = master.substream("episode", static_cast<std::uint64_t>(i));
      Rng target_rng = ep_rng.substream("target");
      const TargetSpec target = sample_target(target_rng, model);
      metrics[i] = run_episode(model, env_cfg, actor, target, FaultConfig{}, ep_rng, thresholds);
    }
  };
  if (n_workers <= 1) {
    worker_fn(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker_fn, w);
    for (auto& th : pool) th.join();
  }

  const Aggregate agg = aggregate(metrics);
  if (out_metrics) *out_metrics = std::move(metrics);
  return agg;
}

const std::vector<std::string> kScenarioNames = {
    "spin",     "base-impulse", "obs-delay",    "act-delay",    "eff-base",
    "eff-manip", "momentum-sat", "base-mass",    "obs-bias-pos", "obs-bias-ori"};

bool is_known_scenario(const std::string& name) {
  return std::find(kScenarioNames.begin(), kScenarioNames.end(), name) != kScenarioNames.end();
}

double scenario_nominal_value(const std::string& name) {
  return name == "base-mass" ? 1.0 : 0.0;
}

void apply_scenario(const std::string& name, double value, Rng& rng, TargetSpec& target,
                    FaultConfig& faults) {
  if (name == "spin") {
    target.spin_rate = value;
    target.spin_axis = rng.unit_vector();
  } else if (name == "base-impulse") {
    faults.impulse_magnitude = value;
    faults.impulse_direction = rng.unit_vector();
    faults.impulse_step = 5 + static_cast<int>(rng.uniform_int(21));  // [5, 25]
  } else if (name == "obs-delay") {
    faults.obs_delay_prob = value;
  } else if (name == "act-delay") {
    faults.act_delay_prob = value;
  } else if (name == "eff-base") {
    faults.eff_base = 1.0 - value;  // grid value is the efficiency LOSS
  } else if (name == "eff-manip") {
    faults.eff_manip = 1.0 - value;
  } else if (name == "momentum-sat") {
    for (int k = 0; k < 3; ++k) {
      faults.wheel_momentum0[k] =
          (rng.uniform() < 0.5 ? -1.0 : 1.0) * value * faults.wheel_capacity;
    }
  } else if (name == "base-mass") {
    faults.base_mass_scale = value;
  } else if (name == "obs-bias-pos") {
    faults.obs_bias_pos = value * rng.unit_vector();
  } else if (name == "obs-bias-ori") {
    faults.obs_bias_ori_angle = value;
    faults.obs_bias_ori_axis = rng.unit_vector();
  } else {
    throw ConfigError("unknown scenario '" + name + "'");
  }
}

std::vector<CampaignPoint> run_scenario(const SystemModel& model, const EnvConfig& env_cfg,
                                        const ActorFactory& factory, const ScenarioConfig& scenario,
                                        int workers, const SuccessThresholds& thresholds) {
  if (!is_known_scenario(scenario.name)) {
    throw ConfigError("unknown scenario '" + scenario.name + "'");
  }
  if (scenario.grid.empty()) throw ConfigError("scenario grid must not be empty");

  std::vector<CampaignPoint> points;
  for (const double value : scenario.grid) {
    CampaignPoint point;
    point.param = value;
    for (const std::uint64_t seed : scenario.seeds) {
      Rng master = Rng(seed).substream("scenario-" + scenario.name);
      const int episodes = scenario.episodes_per_seed;
      std::vector<EpisodeMetrics> metrics(episodes);

      std::vector<std::unique_ptr<EpisodeActor>> actors;
      const int n_workers = std::max(1, std::min(workers, episodes));
      for (int w = 0; w < n_workers; ++w) actors.push_back(factory());

      std::atomic<int> next{0};
      auto worker_fn = [&](int w) {
        EpisodeActor& actor = *actors[w];
        for (int i = next.fetch_add(1); i < episodes; i = next.fetch_add(1)) {
          Rng ep_rng = master.substream("episode", static_cast<std::uint64_t>(i));
          Rng target_rng = ep_rng.substream("target");
          TargetSpec target = sample_target(target_rng, model);
          FaultConfig faults;
          if (value != scenario_nominal_value(scenario.name)) {
            Rng fault_rng = ep_rng.substream("fault");
            apply_scenario(scenario.name, value, fault_rng, target, faults);
          }
          metrics[i] = run_episode(model, env_cfg, actor, target, faults, ep_rng, thresholds);
        }
      };
      if (n_workers <= 1) {
        worker_fn(0);
      } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker_fn, w);
        for (auto& th : pool) th.join();
      }
      point.per_seed.push_back(aggregate(metrics));
    }

    const double n = static_cast<double>(point.per_seed.size());
    for (const auto& a : point.per_seed) {
      point.mean.asr += a.asr / n;
      point.mean.ape += a.ape / n;
      point.mean.aoe += a.aoe / n;
      point.mean.abae += a.abae / n;
    }
    for (const auto& a : point.per_seed) {
      point.stddev.asr += (a.asr - point.mean.asr) * (a.asr - point.mean.asr) / n;
      point.stddev.ape += (a.ape - point.mean.ape) * (a.ape - point.mean.ape) / n;
      point.stddev.aoe += (a.aoe - point.mean.aoe) * (a.aoe - point.mean.aoe) / n;
      point.stddev.abae += (a.abae - point.mean.abae) * (a.abae - point.mean.abae) / n;
    }
    point.stddev.asr = std::sqrt(point.stddev.asr);
    point.stddev.ape = std::sqrt(point.stddev.ape);
    point.stddev.aoe = std::sqrt(point.stddev.aoe);
    point.stddev.abae = std::sqrt(point.stddev.abae);
    points.push_back(std::move(point));
  }
  return points;
}

void write_campaign_csv(std::ostream& os, const ScenarioConfig& scenario,
                        const std::vector<CampaignPoint>& points) {
  os << "# scenario = " << scenario.name << "\n";
  os << "param";
  for (std::size_t s = 0; s < (points.empty() ? 0 : points[0].per_seed.size()); ++s) {
    os << ",asr_seed" << s << ",ape_seed" << s << ",aoe_seed" << s << ",abae_seed" << s;
  }
  os << ",asr_mean,asr_std,ape_mean,ape_std,aoe_mean,aoe_std,abae_mean,abae_std\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << ',' << buf;
  };
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%.17g", p.param);
    os << buf;
    for (const auto& a : p.per_seed) {
      num(a.asr);
      num(a.ape);
      num(a.aoe);
      num(a.abae);
    }
    num(p.mean.asr);
    num(p.stddev.asr);
    num(p.mean.ape);
    num(p.stddev.ape);
    num(p.mean.aoe);
    num(p.stddev.aoe);
    num(p.mean.abae);
    num(p.stddev.abae);
    os << '\n';
  }
}

std::vector<CampaignPoint> read_campaign_csv(std::istream& is) {
  std::vector<CampaignPoint> points;
  std::string line;
  std::vector<std::string> header;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (header.empty()) {
      header = cells;
      continue;
    }
    CampaignPoint p;
    p.param = std::stod(cells.at(0));
    const std::size_t n_seed_cols = (cells.size() - 1 - 8) / 4;
    std::size_t idx = 1;
    for (std::size_t s = 0; s < n_seed_cols; ++s) {
      Aggregate a;
      a.asr = std::stod(cells.at(idx++));
      a.ape = std::stod(cells.at(idx++));
      a.aoe = std::stod(cells.at(idx++));
      a.abae = std::stod(cells.at(idx++));
      p.per_seed.push_back(a);
    }
    p.mean.asr = std::stod(cells.at(idx++));
    p.stddev.asr = std::stod(cells.at(idx++));
    p.mean.ape = std::stod(cells.at(idx++));
    p.stddev.ape = std::stod(cells.at(idx++));
    p.mean.aoe = std::stod(cells.at(idx++));
    p.stddev.aoe = std::stod(cells.at(idx++));
    p.mean.abae = std::stod(cells.at(idx++));
    p.stddev.abae = std::stod(cells.at(idx++));
    points.push_back(std::move(p));
  }
  return points;
}

}  // namespace ff
