#include "freeflyer/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "freeflyer/errors.hpp"

namespace ff {

RunConfig default_run_config() { return RunConfig{}; }

namespace {

std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string boolean(bool v) { return v ? "true" : "false"; }

}  // namespace

std::string run_config_text(const RunConfig& c) {
  std::ostringstream os;
  os << "model_file = " << c.model_file << "\n";
  os << "master_seed = " << c.master_seed << "\n";
  os << "workers = " << c.workers << "\n";
  os << "eval.episodes = " << c.eval_episodes << "\n";

  os << "env.dt = " << num(c.env.dt) << "\n";
  os << "env.substeps = " << c.env.substeps << "\n";
  os << "env.horizon = " << c.env.horizon << "\n";
  os << "env.initial_q =";
  for (int j = 0; j < 6; ++j) os << ' ' << num(c.env.initial_q[j]);
  os << "\n";
  os << "env.aln_signed = " << boolean(c.env.aln_signed) << "\n";

  const RewardConfig& r = c.env.reward;
  os << "reward.k_pos = " << num(r.k_pos) << "\n";
  os << "reward.k_ori = " << num(r.k_ori) << "\n";
  os << "reward.k_smth = " << num(r.k_smth) << "\n";
  os << "reward.qdot_tol = " << num(r.qdot_tol) << "\n";
  os << "reward.k_aln = " << num(r.k_aln) << "\n";
  os << "reward.k_done_m = " << num(r.k_done_m) << "\n";
  os << "reward.eps_pos = " << num(r.eps_pos) << "\n";
  os << "reward.eps_ori = " << num(r.eps_ori) << "\n";
  os << "reward.k_att = " << num(r.k_att) << "\n";
  os << "reward.k_var = " << num(r.k_var) << "\n";
  os << "reward.k_done_b = " << num(r.k_done_b) << "\n";
  os << "reward.eps_att = " << num(r.eps_att) << "\n";

  const TrainConfig& t = c.train;
  os << "train.buffer_transitions = " << t.buffer_transitions << "\n";
  os << "train.minibatch = " << t.minibatch << "\n";
  os << "train.total_episodes = " << t.total_episodes << "\n";
  os << "train.steps_per_episode = " << t.steps_per_episode << "\n";
  os << "train.gamma = " << num(t.gamma) << "\n";
  os << "train.lambda = " << num(t.lambda) << "\n";
  os << "train.clip_eps = " << num(t.clip_eps) << "\n";
  os << "train.k_update = " << t.k_update << "\n";
  os << "train.her_epochs = " << t.her_epochs << "\n";
  os << "train.guidance_epochs = " << t.guidance_epochs << "\n";
  os << "train.actor_lr = " << num(t.actor_lr) << "\n";
  os << "train.critic_lr = " << num(t.critic_lr) << "\n";
  os << "train.entropy_coef = " << num(t.entropy_coef) << "\n";
  os << "train.value_coef = " << num(t.value_coef) << "\n";
  os << "train.advantage_norm = " << boolean(t.advantage_norm) << "\n";
  os << "train.use_tesg = " << boolean(t.use_tesg) << "\n";
  os << "train.use_her = " << boolean(t.use_her) << "\n";
  os << "train.eval_cadence = " << t.eval_cadence << "\n";
  os << "train.eval_episodes = " << t.eval_episodes << "\n";
  os << "train.checkpoint_cadence = " << t.checkpoint_cadence << "\n";

  const ExpertConfig& e = c.expert;
  os << "expert.rrt_budget = " << e.rrt.budget << "\n";
  os << "expert.rrt_steer = " << num(e.rrt.steer) << "\n";
  os << "expert.rrt_gamma = " << num(e.rrt.gamma) << "\n";
  os << "expert.rrt_goal_bias = " << num(e.rrt.goal_bias) << "\n";
  os << "expert.rrt_goal_tolerance = " << num(e.rrt.goal_tolerance) << "\n";
  os << "expert.ik_seeds = " << e.ik_seeds << "\n";
  os << "expert.track_gain = " << num(e.track_gain) << "\n";
  os << "expert.speed_fraction = " << num(e.speed_fraction) << "\n";
  os << "expert.pid_kp = " << num(e.pid.kp) << "\n";
  os << "expert.pid_ki = " << num(e.pid.ki) << "\n";
  os << "expert.pid_kd = " << num(e.pid.kd) << "\n";
  os << "expert.pid_conditional_integration = " << boolean(e.pid.conditional_integration) << "\n";
  return os.str();
}

namespace {

struct KvMap {
  std::map<std::string, std::string> kv;

  bool take(const std::string& key, std::string& out) {
    const auto it = kv.find(key);
    if (it == kv.end()) return false;
    out = it->second;
    kv.erase(it);
    return true;
  }

  void number(const std::string& key, double& out) {
    std::string v;
    if (!take(key, v)) return;
    std::size_t pos = 0;
    out = std::stod(v, &pos);
    if (pos != v.size()) throw ConfigError("config key '" + key + "': bad number '" + v + "'");
  }
  template <typename Int>
  void integer(const std::string& key, Int& out) {
    std::string v;
    if (!take(key, v)) return;
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != v.size()) throw ConfigError("config key '" + key + "': bad integer '" + v + "'");
    out = static_cast<Int>(n);
  }
  void flag(const std::string& key, bool& out) {
    std::string v;
    if (!take(key, v)) return;
    if (v == "true") {
      out = true;
    } else if (v == "false") {
      out = false;
    } else {
      throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
    }
  }
  void text(const std::string& key, std::string& out) { take(key, out); }
};

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  KvMap m;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (auto pos = line.find('#'); pos != std::string::npos) line.resize(pos);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config: malformed line '" + line + "'");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!m.kv.emplace(key, value).second) throw ConfigError("config: duplicate key '" + key + "'");
  }

  RunConfig c = default_run_config();
  m.text("model_file", c.model_file);
  m.integer("master_seed", c.master_seed);
  m.integer("workers", c.workers);
  m.integer("eval.episodes", c.eval_episodes);

  m.number("env.dt", c.env.dt);
  m.integer("env.substeps", c.env.substeps);
  m.integer("env.horizon", c.env.horizon);
  {
    std::string v;
    if (m.take("env.initial_q", v)) {
      std::istringstream qs(v);
      for (int j = 0; j < 6; ++j) {
        if (!(qs >> c.env.initial_q[j])) throw ConfigError("env.initial_q: expected 6 numbers");
      }
      double extra;
      if (qs >> extra) throw ConfigError("env.initial_q: expected exactly 6 numbers");
    }
  }
  m.flag("env.aln_signed", c.env.aln_signed);

  RewardConfig& r = c.env.reward;
  m.number("reward.k_pos", r.k_pos);
  m.number("reward.k_ori", r.k_ori);
  m.number("reward.k_smth", r.k_smth);
  m.number("reward.qdot_tol", r.qdot_tol);
  m.number("reward.k_aln", r.k_aln);
  m.number("reward.k_done_m", r.k_done_m);
  m.number("reward.eps_pos", r.eps_pos);
  m.number("reward.eps_ori", r.eps_ori);
  m.number("reward.k_att", r.k_att);
  m.number("reward.k_var", r.k_var);
  m.number("reward.k_done_b", r.k_done_b);
  m.number("reward.eps_att", r.eps_att);

  TrainConfig& t = c.train;
  m.integer("train.buffer_transitions", t.buffer_transitions);
  m.integer("train.minibatch", t.minibatch);
  m.integer("train.total_episodes", t.total_episodes);
  m.integer("train.steps_per_episode", t.steps_per_episode);
  m.number("train.gamma", t.gamma);
  m.number("train.lambda", t.lambda);
  m.number("train.clip_eps", t.clip_eps);
  m.integer("train.k_update", t.k_update);
  m.integer("train.her_epochs", t.her_epochs);
  m.integer("train.guidance_epochs", t.guidance_epochs);
  m.number("train.actor_lr", t.actor_lr);
  m.number("train.critic_lr", t.critic_lr);
  m.number("train.entropy_coef", t.entropy_coef);
  m.number("train.value_coef", t.value_coef);
  m.flag("train.advantage_norm", t.advantage_norm);
  m.flag("train.use_tesg", t.use_tesg);
  m.flag("train.use_her", t.use_her);
  m.integer("train.eval_cadence", t.eval_cadence);
  m.integer("train.eval_episodes", t.eval_episodes);
  m.integer("train.checkpoint_cadence", t.checkpoint_cadence);

  ExpertConfig& e = c.expert;
  m.integer("expert.rrt_budget", e.rrt.budget);
  m.number("expert.rrt_steer", e.rrt.steer);
  m.number("expert.rrt_gamma", e.rrt.gamma);
  m.number("expert.rrt_goal_bias", e.rrt.goal_bias);
  m.number("expert.rrt_goal_tolerance", e.rrt.goal_tolerance);
  m.integer("expert.ik_seeds", e.ik_seeds);
  m.number("expert.track_gain", e.track_gain);
  m.number("expert.speed_fraction", e.speed_fraction);
  m.number("expert.pid_kp", e.pid.kp);
  m.number("expert.pid_ki", e.pid.ki);
  m.number("expert.pid_kd", e.pid.kd);
  m.flag("expert.pid_conditional_integration", e.pid.conditional_integration);

  if (!m.kv.empty()) {
    throw ConfigError("config: unknown key '" + m.kv.begin()->first + "'");
  }
  validate_run_config(c);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

void validate_run_config(const RunConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  require(c.env.dt > 0, "env.dt must be > 0");
  require(c.env.substeps >= 1, "env.substeps must be >= 1");
  require(c.env.horizon >= 10, "env.horizon must be >= 10");
  require(c.train.buffer_transitions > 0, "train.buffer_transitions must be positive");
  require(c.train.minibatch > 0, "train.minibatch must be positive");
  require(c.train.minibatch <= c.train.buffer_transitions,
          "train.minibatch must not exceed train.buffer_transitions");
  require(c.train.steps_per_episode == c.env.horizon,
          "train.steps_per_episode must equal env.horizon");
  require(c.train.buffer_transitions % c.train.steps_per_episode == 0,
          "train.buffer_transitions must be a multiple of steps_per_episode");
  require(c.train.total_episodes % (c.train.buffer_transitions / c.train.steps_per_episode) == 0,
          "train.total_episodes must be a whole number of epochs");
  require(c.train.gamma > 0 && c.train.gamma <= 1, "train.gamma must be in (0, 1]");
  require(c.train.lambda >= 0 && c.train.lambda <= 1, "train.lambda must be in [0, 1]");
  require(c.train.clip_eps > 0, "train.clip_eps must be positive");
  require(c.train.k_update >= 1, "train.k_update must be >= 1");
  require(c.train.guidance_epochs >= 0, "train.guidance_epochs must be >= 0");
  require(c.expert.rrt.budget >= 1, "expert.rrt_budget must be >= 1");
  require(c.expert.rrt.steer > 0, "expert.rrt_steer must be positive");
  require(c.expert.speed_fraction > 0 && c.expert.speed_fraction <= 1,
          "expert.speed_fraction must be in (0, 1]");
  require(c.eval_episodes >= 1, "eval.episodes must be >= 1");
}

SystemModel resolve_model(const RunConfig& cfg) {
  if (cfg.model_file.empty()) return default_system_model();
  return load_model_file(cfg.model_file);
}

}  // namespace ff
