#include "freeflyer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>

#include "freeflyer/errors.hpp"
#include "freeflyer/eval.hpp"

namespace ff {

double tesg_probability(int k, int k_g) {
  if (k > k_g) return 1.0;
  return 0.3 + 0.5 * static_cast<double>(k) / static_cast<double>(k_g);
}

std::pair<VecX, VecX> compute_gae(const VecX& rewards, const VecX& values, double gamma,
                                  double lambda) {
  const long t_len = rewards.size();
  if (values.size() != t_len + 1) throw ShapeMismatchError("compute_gae: values must be T+1");
  VecX adv(t_len), ret(t_len);
  double acc = 0.0;
  for (long t = t_len - 1; t >= 0; --t) {
    const double delta = rewards[t] + gamma * values[t + 1] - values[t];
    acc = delta + gamma * lambda * acc;
    adv[t] = acc;
    ret[t] = acc + values[t];
  }
  return {adv, ret};
}

void Buffer::add(AgentEpisode ep, bool relabeled) {
  const long n = static_cast<long>(ep.steps.size());
  if (!relabeled) raw_transitions += n;
  total_transitions += n;
  episodes.push_back(std::move(ep));
}

void Buffer::clear() {
  episodes.clear();
  raw_transitions = 0;
  total_transitions = 0;
}

LearnerState LearnerState::create(const AgentSpec& spec, Rng& rng) {
  LearnerState s{PpoAgent::create(spec, rng), {}, {}, {}};
  s.actor_opt = MlpAdam::zeros_like(s.agent.actor);
  s.critic_opt = MlpAdam::zeros_like(s.agent.critic);
  s.log_std_opt = AdamState::zeros(spec.act_dim, 1);
  return s;
}

UpdateDiagnostics ppo_update(LearnerState& learner, const Buffer& buffer, const TrainConfig& cfg,
                             Rng& rng) {
  PpoAgent& agent = learner.agent;
  const int obs_dim = agent.spec.obs_dim;
  const int act_dim = agent.spec.act_dim;
  const long total = buffer.total_transitions;
  UpdateDiagnostics diag;
  if (total == 0) return diag;
  buffer.reads += 1;

  // flatten episodes into contiguous tensors
  MatX obs(obs_dim, total);
  MatX act(act_dim, total);
  VecX logp_old(total);
  long col = 0;
  for (const auto& ep : buffer.episodes) {
    for (const auto& tr : ep.steps) {
      obs.col(col) = tr.obs;
      act.col(col) = tr.action;
      logp_old[col] = tr.log_prob;
      ++col;
    }
  }

  // advantages once per update phase, with the critic as of phase start
  VecX adv(total), ret(total);
  {
    long at = 0;
    for (const auto& ep : buffer.episodes) {
      const long t_len = static_cast<long>(ep.steps.size());
      MatX ep_obs(obs_dim, t_len + 1);
      VecX rewards(t_len);
      for (long t = 0; t < t_len; ++t) {
        ep_obs.col(t) = ep.steps[t].obs;
        rewards[t] = ep.steps[t].reward;
      }
      ep_obs.col(t_len) = ep.final_obs;
      const VecX values = agent.critic.forward_batch(ep_obs).row(0).transpose();
      auto [a, r] = compute_gae(rewards, values, cfg.gamma, cfg.lambda);
      adv.segment(at, t_len) = a;
      ret.segment(at, t_len) = r;
      at += t_len;
    }
  }
  if (cfg.advantage_norm) {
    const double mean = adv.mean();
    const double sd = std::sqrt((adv.array() - mean).square().sum() / total) + 1e-8;
    adv = (adv.array() - mean) / sd;
  }

  const long batch = std::min<long>(cfg.minibatch, total);
  std::vector<long> order(total);
  std::iota(order.begin(), order.end(), 0);

  double loss_actor_acc = 0.0, loss_critic_acc = 0.0, ratio_acc = 0.0, clip_acc = 0.0;
  const double inv_batch = 1.0 / static_cast<double>(batch);

  for (int it = 0; it < cfg.k_update; ++it) {
    // uniform minibatch without replacement (partial Fisher-Yates)
    for (long i = 0; i < batch; ++i) {
      const long j = i + static_cast<long>(rng.uniform_int(total - i));
      std::swap(order[i], order[j]);
    }

    MatX mb_obs(obs_dim, batch), mb_act(act_dim, batch);
    VecX mb_logp(batch), mb_adv(batch), mb_ret(batch);
    for (long i = 0; i < batch; ++i) {
      mb_obs.col(i) = obs.col(order[i]);
      mb_act.col(i) = act.col(order[i]);
      mb_logp[i] = logp_old[order[i]];
      mb_adv[i] = adv[order[i]];
      mb_ret[i] = ret[order[i]];
    }

    // ---- actor ----
    MlpCache cache;
    const MatX raw = mlp_forward_cached(agent.actor, mb_obs, cache);
    const MatX mean = raw.array().tanh().matrix();
    const VecX sigma = agent.head.log_std.array().exp().matrix();

    VecX logp_new = VecX::Constant(batch, -0.5 * act_dim * std::log(2.0 * M_PI) -
                                              agent.head.log_std.sum());
    for (long i = 0; i < batch; ++i) {
      for (int d = 0; d < act_dim; ++d) {
        const double z = (mb_act(d, i) - mean(d, i)) / sigma[d];
        logp_new[i] -= 0.5 * z * z;
      }
    }

    double loss_actor = 0.0, ratio_sum = 0.0;
    long clipped = 0;
    MatX dmean = MatX::Zero(act_dim, batch);
    VecX dlogstd = VecX::Zero(act_dim);
    for (long i = 0; i < batch; ++i) {
      const double rho = std::exp(logp_new[i] - mb_logp[i]);
      const double a_hat = mb_adv[i];
      const double s1 = rho * a_hat;
      const double lo = 1.0 - cfg.clip_eps, hi = 1.0 + cfg.clip_eps;
      const double s2 = std::clamp(rho, lo, hi) * a_hat;
      loss_actor -= std::min(s1, s2) * inv_batch;
      ratio_sum += rho;
      if (rho < lo || rho > hi) ++clipped;

      // gradient flows only through the unclipped branch
      if (s1 <= s2) {
        const double dlogp = -a_hat * rho * inv_batch;  // d(loss)/d(logp_new)
        for (int d = 0; d < act_dim; ++d) {
          const double z = (mb_act(d, i) - mean(d, i)) / sigma[d];
          dmean(d, i) += dlogp * (z / sigma[d]);
          dlogstd[d] += dlogp * (z * z - 1.0);
        }
      }
    }
    if (cfg.entropy_coef != 0.0) {
      // entropy of the diagonal gaussian: sum(log sigma) + const
      loss_actor -= cfg.entropy_coef * (agent.head.log_std.sum() +
                                        0.5 * act_dim * std::log(2.0 * M_PI * M_E));
      dlogstd.array() -= cfg.entropy_coef;
    }

    const MatX draw = dmean.cwiseProduct(MatX::Ones(act_dim, batch) - mean.cwiseProduct(mean));
    MlpGrads agrads = MlpGrads::zeros_like(agent.actor);
    mlp_backward(agent.actor, cache, draw, agrads);
    learner.actor_opt.update(agent.actor, agrads, cfg.actor_lr);
    MatX ls = agent.head.log_std;
    learner.log_std_opt.update(ls, dlogstd, cfg.actor_lr);
    agent.head.log_std = ls;

    // ---- critic ----
    MlpCache vcache;
    const MatX v = mlp_forward_cached(agent.critic, mb_obs, vcache);
    const MatX err = v.row(0).transpose() - mb_ret;
    const double loss_critic =
        cfg.value_coef * err.squaredNorm() * inv_batch;
    MatX dv(1, batch);
    dv.row(0) = (2.0 * cfg.value_coef * inv_batch) * err.transpose();
    MlpGrads cgrads = MlpGrads::zeros_like(agent.critic);
    mlp_backward(agent.critic, vcache, dv, cgrads);
    learner.critic_opt.update(agent.critic, cgrads, cfg.critic_lr);

    loss_actor_acc += loss_actor;
    loss_critic_acc += loss_critic;
    ratio_acc += ratio_sum * inv_batch;
    clip_acc += static_cast<double>(clipped) * inv_batch;
  }

  diag.actor_loss = loss_actor_acc / cfg.k_update;
  diag.critic_loss = loss_critic_acc / cfg.k_update;
  diag.mean_ratio = ratio_acc / cfg.k_update;
  diag.clip_fraction = clip_acc / cfg.k_update;
  diag.finite = std::isfinite(diag.actor_loss) && std::isfinite(diag.critic_loss);
  return diag;
}

std::optional<DualEpisode> collect_episode(Env& env, const LearnerState& manip,
                                           const LearnerState& base, double p_drl,
                                           const ExpertConfig& expert_cfg, const TargetSpec& target,
                                           Rng rng) {
  DualEpisode ep;
  ep.target = target;

  Rng env_rng = rng.substream("env");
  Rng act_rng = rng.substream("act");
  Rng tesg_rng = rng.substream("tesg");

  ObsPair obs = env.reset(env_rng, target, FaultConfig{});

  std::optional<ExpertPolicy> expert;
  if (p_drl < 1.0) {
    expert.emplace(env.model(), expert_cfg,
                   Pose{target.orientation.to_matrix(), target.position},
                   env.config().initial_q, rng.substream("expert"));
  }

  const int t_len = env.config().horizon;
  ep.ee_seq.reserve(t_len + 1);
  ep.q_seq.reserve(t_len + 1);
  ep.qdot_seq.reserve(t_len + 1);
  ep.ee_seq.push_back(env.ee_pose());
  ep.q_seq.push_back(env.state().q);
  ep.qdot_seq.push_back(env.state().qdot);

  const Mat3 init_rot = Mat3::Identity();  // episodes start at identity attitude

  for (int t = 0; t < t_len; ++t) {
    // both candidate pairs are produced every step (the DRL draw always
    // consumes randomness so trajectories are reproducible for fixed seeds)
    auto [am_norm, lp_m] = manip.agent.sample(obs.manip, act_rng);
    auto [ab_norm, lp_b] = base.agent.sample(obs.base, act_rng);

    Vec6 am_phys;
    Vec3 ab_phys;
    bool from_prior = false;
    if (expert && tesg_rng.uniform() > p_drl) {
      from_prior = true;
      am_phys = expert->manipulator_action(env.state().q, t);
      const Mat3 rel = init_rot.transpose() * env.state().base_attitude.to_matrix();
      ab_phys = expert->base_action(rel, init_rot);
      // stored action is the executed one; density under the current policy
      am_norm = manip.agent.head.to_normalized(am_phys);
      ab_norm = base.agent.head.to_normalized(ab_phys);
      lp_m = manip.agent.head.log_prob(manip.agent.actor_mean(obs.manip), am_norm);
      lp_b = base.agent.head.log_prob(base.agent.actor_mean(obs.base), ab_norm);
      ep.prior_steps += 1;
    } else {
      if (expert) {
        // keep the expert's controller state in lockstep with the episode
        expert->manipulator_action(env.state().q, t);
        const Mat3 rel = init_rot.transpose() * env.state().base_attitude.to_matrix();
        expert->base_action(rel, init_rot);
      }
      am_phys = manip.agent.to_physical(am_norm);
      ab_phys = base.agent.to_physical(ab_norm);
    }

    const EnvStepResult res = env.step(am_phys, ab_phys);
    if (res.failed) return std::nullopt;

    Transition trm{obs.manip, am_norm, lp_m, res.reward_manip.total, from_prior};
    Transition trb{obs.base, ab_norm, lp_b, res.reward_base.total, from_prior};
    ep.manip.steps.push_back(std::move(trm));
    ep.base.steps.push_back(std::move(trb));
    ep.action_m_phys.push_back(am_phys);
    ep.action_b_phys.push_back(ab_phys);
    ep.ee_seq.push_back(env.ee_pose());
    ep.q_seq.push_back(env.state().q);
    ep.qdot_seq.push_back(env.state().qdot);
    ep.errors.push_back(res.errors);
    obs = res.obs;
  }

  ep.manip.final_obs = obs.manip;
  ep.base.final_obs = obs.base;
  ep.manip_success = success_monitor(ep.errors, env.config().reward.eps_pos,
                                     env.config().reward.eps_ori,
                                     std::numeric_limits<double>::infinity());
  return ep;
}

AgentEpisode her_relabel(const DualEpisode& episode, const PpoAgent& manip_agent,
                         const RewardConfig& reward_cfg, bool aln_signed) {
  AgentEpisode out;
  const Pose new_target = episode.ee_seq.back();
  const long t_len = static_cast<long>(episode.manip.steps.size());

  auto view_at = [&](long t) {
    ManipStepView v;
    v.e_pos = (episode.ee_seq[t].translation - new_target.translation).norm();
    v.e_ori = geodesic_angle(episode.ee_seq[t].rotation, new_target.rotation);
    v.qdot = episode.qdot_seq[t];
    return v;
  };

  ManipStepView prev = view_at(0);
  for (long t = 0; t < t_len; ++t) {
    const ObsManip obs = Env::manipulator_observation(episode.ee_seq[t], new_target,
                                                      episode.q_seq[t], episode.qdot_seq[t]);
    const ManipStepView cur = view_at(t + 1);
    const double reward = reward_manipulator(prev, cur, reward_cfg, aln_signed).total;
    prev = cur;

    Transition tr;
    tr.obs = obs;
    tr.action = episode.manip.steps[t].action;
    tr.log_prob = manip_agent.head.log_prob(manip_agent.actor_mean(obs), tr.action);
    tr.reward = reward;
    tr.from_prior = episode.manip.steps[t].from_prior;
    out.steps.push_back(std::move(tr));
  }
  out.final_obs = Env::manipulator_observation(episode.ee_seq[t_len], new_target,
                                               episode.q_seq[t_len], episode.qdot_seq[t_len]);
  return out;
}

Trainer::Trainer(const SystemModel& model, const EnvConfig& env_cfg, const TrainConfig& cfg,
                 const ExpertConfig& expert_cfg, std::uint64_t seed)
    : model_(model), env_cfg_(env_cfg), cfg_(cfg), expert_cfg_(expert_cfg), seed_(seed) {
  Rng rm = Rng(seed).substream("init_manip");
  manip_ = LearnerState::create(manipulator_agent_spec(), rm);
  Rng rb = Rng(seed).substream("init_base");
  base_ = LearnerState::create(base_agent_spec(), rb);
}

void write_metrics_header(std::ostream& os) {
  os << "epoch,k,p_k,prior_steps,dropped,asr,ape,aoe,abae,"
        "actor_loss_m,critic_loss_m,clip_frac_m,mean_ratio_m,"
        "actor_loss_b,critic_loss_b,clip_frac_b,mean_ratio_b\n";
}

void write_metrics_row(std::ostream& os, const EpochRow& r) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << ',' << buf;
  };
  os << r.epoch << ',' << r.k;
  num(r.p_k);
  os << ',' << r.prior_steps << ',' << r.dropped_episodes;
  num(r.asr);
  num(r.ape);
  num(r.aoe);
  num(r.abae);
  num(r.manip.actor_loss);
  num(r.manip.critic_loss);
  num(r.manip.clip_fraction);
  num(r.manip.mean_ratio);
  num(r.base.actor_loss);
  num(r.base.critic_loss);
  num(r.base.clip_fraction);
  num(r.base.mean_ratio);
  os << '\n';
}

TrainResult Trainer::run(const std::string& out_dir,
                         const std::function<void(const EpochRow&)>& progress) {
  TrainResult result;
  Rng master(seed_);
  Env env(model_, env_cfg_);

  std::ofstream metrics;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    metrics.open(out_dir + "/metrics.csv", std::ios::binary);
    write_metrics_header(metrics);
  }

  auto checkpoint = [&](const std::string& tag) {
    if (out_dir.empty()) return;
    manip_.agent.save(out_dir + "/ckpt_" + tag + "_manip.bin");
    base_.agent.save(out_dir + "/ckpt_" + tag + "_base.bin");
  };

  Buffer buf_m, buf_b;
  int k = 0;
  int nonfinite_streak = 0;
  long episode_counter = 0;

  const int total_epochs = cfg_.epochs();
  for (int epoch = 1; epoch <= total_epochs; ++epoch) {
    const double p_k = cfg_.use_tesg ? tesg_probability(k, cfg_.guidance_epochs) : 1.0;
    EpochRow row;
    row.epoch = epoch;
    row.k = k;
    row.p_k = p_k;

    // Phase 1: fill both buffers with C raw transitions each
    while (buf_b.raw_transitions < cfg_.buffer_transitions) {
      Rng ep_rng = master.substream("episode", static_cast<std::uint64_t>(episode_counter));
      ++episode_counter;
      Rng target_rng = ep_rng.substream("target");
      const TargetSpec target = sample_target(target_rng, model_);
      auto ep = collect_episode(env, manip_, base_, p_k, expert_cfg_, target, ep_rng);
      if (!ep) {
        row.dropped_episodes += 1;
        continue;
      }
      row.prior_steps += ep->prior_steps;
      if (cfg_.use_her && epoch <= cfg_.her_epochs && !ep->manip_success) {
        buf_m.add(her_relabel(*ep, manip_.agent, env_cfg_.reward, env_cfg_.aln_signed), true);
      }
      buf_m.add(std::move(ep->manip), false);
      buf_b.add(std::move(ep->base), false);
    }

    // Phase 2: per-agent updates
    Rng up_m = master.substream("update_manip", static_cast<std::uint64_t>(epoch));
    Rng up_b = master.substream("update_base", static_cast<std::uint64_t>(epoch));
    row.manip = ppo_update(manip_, buf_m, cfg_, up_m);
    row.base = ppo_update(base_, buf_b, cfg_, up_b);

    // Phase 3: flush
    buf_m.clear();
    buf_b.clear();
    k += 1;

    if (!row.manip.finite || !row.base.finite) {
      ++nonfinite_streak;
      if (nonfinite_streak > 3) {
        result.aborted = true;
        result.abort_reason = "non-finite losses for more than 3 consecutive epochs";
        result.rows.push_back(row);
        if (metrics.is_open()) write_metrics_row(metrics, row);
        break;
      }
    } else {
      nonfinite_streak = 0;
    }

    if (cfg_.eval_cadence > 0 && epoch % cfg_.eval_cadence == 0) {
      PolicyActorFactory factory{manip_.agent, base_.agent};
      const Aggregate agg =
          evaluate_policy(model_, env_cfg_, factory, cfg_.eval_episodes,
                          master.substream("train_eval", static_cast<std::uint64_t>(epoch)), 1);
      row.asr = agg.asr;
      row.ape = agg.ape;
      row.aoe = agg.aoe;
      row.abae = agg.abae;
    }

    if (cfg_.checkpoint_cadence > 0 && epoch % cfg_.checkpoint_cadence == 0) {
      char tag[16];
      std::snprintf(tag, sizeof(tag), "ep%04d", epoch);
      checkpoint(tag);
    }

    result.rows.push_back(row);
    if (metrics.is_open()) write_metrics_row(metrics, row);
    if (progress) progress(row);
  }

  checkpoint("final");
  return result;
}

}  // namespace ff
