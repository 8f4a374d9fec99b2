#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "freeflyer/eval.hpp"
#include "freeflyer/run_config.hpp"
#include "freeflyer/selftest.hpp"
#include "freeflyer/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

std::string output_root() {
  if (const char* env = std::getenv("FREEFLYER_OUTPUT_ROOT")) return env;
  return ".";
}

fs::path resolve_out(const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return p;
  return fs::path(output_root()) / p;
}

std::uint64_t file_hash(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string s = ss.str();
  return ff::fnv1a64(s.data(), s.size());
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

ff::RunConfig load_config_or_default(const std::string& config_path) {
  if (config_path.empty()) return ff::default_run_config();
  return ff::load_run_config(config_path);
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {
    double start = 0, step = 0, stop = 0;
    char c1 = 0, c2 = 0;
    std::istringstream ss(text);
    if (!(ss >> start >> c1 >> step >> c2 >> stop) || c1 != ':' || c2 != ':' || step <= 0) {
      throw ff::ConfigError("bad grid '" + text + "' (expected start:step:stop)");
    }
    for (double v = start; v <= stop + 1e-12; v += step) grid.push_back(v);
  } else {
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (!cell.empty()) grid.push_back(std::stod(cell));
    }
  }
  if (grid.empty()) throw ff::ConfigError("grid '" + text + "' is empty");
  return grid;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty()) seeds.push_back(std::stoull(cell));
  }
  if (seeds.empty()) throw ff::ConfigError("seed list '" + text + "' is empty");
  return seeds;
}

struct LoadedPolicy {
  ff::PpoAgent manip;
  ff::PpoAgent base;
};

LoadedPolicy load_policy(const std::string& dir) {
  const fs::path p(dir);
  return {ff::PpoAgent::load((p / "ckpt_final_manip.bin").string()),
          ff::PpoAgent::load((p / "ckpt_final_base.bin").string())};
}

void write_manifest(const fs::path& dir, const ff::RunConfig& cfg, const json& extra) {
  json manifest;
  manifest["tool"] = std::string("freeflyer ") + kVersion;
  manifest["version"] = kVersion;
  manifest["seed"] = cfg.master_seed;
  manifest["config_hash"] = hex64(ff::fnv1a64(ff::run_config_text(cfg)));
  manifest["model_checksum"] = hex64(ff::model_checksum(ff::resolve_model(cfg)));
  for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
  std::ofstream f(dir / "manifest.json", std::ios::binary);
  f << manifest.dump(2) << "\n";
}

int effective_workers(const ff::RunConfig& cfg, int cli_workers) {
  int w = cli_workers > 0 ? cli_workers : cfg.workers;
  if (w <= 0) w = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, w);
}

int cmd_train(const std::string& config_path, const std::string& out,
              std::uint64_t seed_override, long epochs_override, long buffer_override,
              bool print_config) {
  ff::RunConfig cfg = load_config_or_default(config_path);
  if (seed_override != 0) cfg.master_seed = seed_override;
  if (buffer_override > 0) {
    cfg.train.buffer_transitions = buffer_override;
    cfg.train.minibatch = std::min(cfg.train.minibatch, buffer_override);
    cfg.train.total_episodes =
        static_cast<long>(cfg.train.epochs()) * cfg.train.episodes_per_epoch();
  }
  if (epochs_override > 0) {
    cfg.train.total_episodes = epochs_override * cfg.train.episodes_per_epoch();
  }
  ff::validate_run_config(cfg);

  if (print_config) {
    std::cout << ff::run_config_text(cfg);
    return kExitOk;
  }

  const fs::path out_dir = resolve_out(out);
  fs::create_directories(out_dir);
  {
    std::ofstream snap(out_dir / "config.cfg", std::ios::binary);
    snap << ff::run_config_text(cfg);
  }

  const ff::SystemModel model = ff::resolve_model(cfg);
  std::cout << "training schedule: " << cfg.train.epochs() << " epochs x "
            << cfg.train.episodes_per_epoch() << " episodes (" << cfg.train.total_episodes
            << " episodes total), guidance epochs k_g = " << cfg.train.guidance_epochs << "\n";

  ff::Trainer trainer(model, cfg.env, cfg.train, cfg.expert, cfg.master_seed);
  const ff::TrainResult result =
      trainer.run(out_dir.string(), [](const ff::EpochRow& row) {
        std::cout << "epoch " << row.epoch << " k=" << row.k << " p=" << row.p_k
                  << " prior_steps=" << row.prior_steps;
        if (!std::isnan(row.asr)) {
          std::cout << " ASR=" << row.asr << " APE=" << row.ape << " AOE=" << row.aoe
                    << " ABAE=" << row.abae;
        }
        std::cout << "\n"
                  << std::flush;
      });

  json extra;
  extra["kind"] = "train";
  json ckpts = json::object();
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("ckpt_", 0) == 0) ckpts[name] = hex64(file_hash(entry.path()));
  }
  extra["checkpoints"] = ckpts;
  extra["epochs_completed"] = result.rows.size();
  extra["aborted"] = result.aborted;
  write_manifest(out_dir, cfg, extra);

  if (result.aborted) {
    std::cerr << "training aborted: " << result.abort_reason << "\n";
    return kExitRuntime;
  }
  std::cout << "run directory: " << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_dir, bool expert,
             bool zero, int episodes, std::uint64_t seed, int workers,
             const std::string& trace_file, int trace_horizon, const std::string& dump_path,
             const std::string& out_file) {
  ff::RunConfig cfg = load_config_or_default(config_path);
  if (episodes > 0) cfg.eval_episodes = episodes;
  const ff::SystemModel model = ff::resolve_model(cfg);
  const int n_workers = effective_workers(cfg, workers);

  ff::ActorFactory factory;
  std::string label;
  if (expert) {
    factory = [&] { return std::make_unique<ff::ExpertEpisodeActor>(model, cfg.expert); };
    label = "RRT*+PID expert";
  } else if (zero) {
    factory = [] { return std::make_unique<ff::ZeroEpisodeActor>(); };
    label = "uncontrolled baseline";
  } else {
    if (checkpoint_dir.empty()) {
      throw ff::ConfigError("eval needs --checkpoint-dir, --expert or --zero");
    }
    auto policy = std::make_shared<LoadedPolicy>(load_policy(checkpoint_dir));
    factory = [policy] {
      return std::make_unique<ff::PolicyEpisodeActor>(policy->manip, policy->base);
    };
    label = "policy " + checkpoint_dir;
  }

  // optional single-episode diagnostic replay with an extended horizon
  if (!trace_file.empty()) {
    ff::EnvConfig env_cfg = cfg.env;
    env_cfg.horizon = trace_horizon;
    ff::Env env(model, env_cfg);
    ff::Rng ep_rng = ff::Rng(seed).substream("trace-episode");
    ff::Rng target_rng = ep_rng.substream("target");
    const ff::TargetSpec target = ff::sample_target(target_rng, model);
    ff::ObsPair obs = env.reset(ep_rng.substream("env"), target, ff::FaultConfig{});
    auto actor = factory();
    actor->begin_episode(env, ep_rng.substream("actor"));
    if (!dump_path.empty()) {
      if (auto* ex = dynamic_cast<ff::ExpertEpisodeActor*>(actor.get()); ex) {
        // the expert exposes its planned path right after begin_episode
      }
    }
    for (int t = 0; t < env_cfg.horizon; ++t) {
      const auto [am, ab] = actor->act(obs, env);
      const ff::EnvStepResult res = env.step(am, ab);
      if (res.failed) break;
      obs = res.obs;
    }
    std::ofstream f(resolve_out(trace_file), std::ios::binary);
    env.write_trace_csv(f);
    std::cout << "trace written: " << resolve_out(trace_file).string() << " ("
              << env.trace().size() << " steps)\n";
  }

  std::vector<ff::EpisodeMetrics> metrics;
  const ff::Aggregate agg =
      ff::evaluate_policy(model, cfg.env, factory, cfg.eval_episodes,
                          ff::Rng(seed).substream("eval"), n_workers, ff::SuccessThresholds{},
                          &metrics);

  std::ostringstream table;
  table << "evaluated " << label << " over " << cfg.eval_episodes << " episodes (seed " << seed
        << ")\n";
  table << "  ASR  (success rate: e_pos<=0.05 m, e_ori<=0.1 rad, e_att<=0.05 rad held 10 steps): "
        << agg.asr << "\n";
  table << "  APE  (mean end-effector position error, final-10-step window) [m]:   " << agg.ape
        << "\n";
  table << "  AOE  (mean end-effector orientation error, final-10-step window) [rad]: " << agg.aoe
        << "\n";
  table << "  ABAE (mean base attitude error, final-10-step window) [rad]: " << agg.abae << "\n";
  std::cout << table.str();

  if (!out_file.empty()) {
    std::ofstream f(resolve_out(out_file), std::ios::binary);
    f << "asr,ape,aoe,abae\n";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", agg.asr, agg.ape, agg.aoe,
                  agg.abae);
    f << buf;
  }

  if (!dump_path.empty()) {
    // dump the expert's plan for the first evaluation episode
    ff::Rng ep_rng = ff::Rng(seed).substream("eval").substream("episode", 0);
    ff::Rng target_rng = ep_rng.substream("target");
    const ff::TargetSpec target = ff::sample_target(target_rng, model);
    ff::ExpertPolicy policy(model, cfg.expert,
                            ff::Pose{target.orientation.to_matrix(), target.position},
                            cfg.env.initial_q, ep_rng.substream("actor"));
    std::ofstream f(resolve_out(dump_path), std::ios::binary);
    if (policy.has_plan()) {
      ff::write_path_csv(f, *policy.path());
      std::cout << "expert path written: " << resolve_out(dump_path).string() << "\n";
    } else {
      f << "index,q1,q2,q3,q4,q5,q6\n";
      std::cout << "expert had no plan for episode 0; header-only dump written\n";
    }
  }
  return kExitOk;
}

int cmd_robustness(const std::string& config_path, const std::string& checkpoint_dir, bool expert,
                   const std::string& scenario_name, const std::string& grid_text,
                   int episodes_per_seed, const std::string& seeds_text, const std::string& out,
                   int workers) {
  ff::RunConfig cfg = load_config_or_default(config_path);
  const ff::SystemModel model = ff::resolve_model(cfg);

  if (!ff::is_known_scenario(scenario_name)) {
    throw ff::ConfigError("unknown scenario '" + scenario_name + "' (known: spin, base-impulse, "
                          "obs-delay, act-delay, eff-base, eff-manip, momentum-sat, base-mass, "
                          "obs-bias-pos, obs-bias-ori)");
  }

  ff::ScenarioConfig sc;
  sc.name = scenario_name;
  sc.grid = parse_grid(grid_text);
  if (episodes_per_seed > 0) sc.episodes_per_seed = episodes_per_seed;
  if (!seeds_text.empty()) sc.seeds = parse_seeds(seeds_text);

  ff::ActorFactory factory;
  if (expert) {
    factory = [&] { return std::make_unique<ff::ExpertEpisodeActor>(model, cfg.expert); };
  } else {
    if (checkpoint_dir.empty()) {
      throw ff::ConfigError("robustness needs --checkpoint-dir or --expert");
    }
    auto policy = std::make_shared<LoadedPolicy>(load_policy(checkpoint_dir));
    factory = [policy] {
      return std::make_unique<ff::PolicyEpisodeActor>(policy->manip, policy->base);
    };
  }

  const int n_workers = effective_workers(cfg, workers);
  const auto points = ff::run_scenario(model, cfg.env, factory, sc, n_workers);

  const fs::path out_dir = resolve_out(out);
  fs::create_directories(out_dir);
  const fs::path csv_path = out_dir / ("scenario_" + scenario_name + ".csv");
  {
    std::ofstream f(csv_path, std::ios::binary);
    ff::write_campaign_csv(f, sc, points);
  }

  json extra;
  extra["kind"] = "robustness";
  extra["scenario"] = sc.name;
  extra["grid"] = sc.grid;
  extra["seeds"] = sc.seeds;
  extra["episodes_per_seed"] = sc.episodes_per_seed;
  if (!checkpoint_dir.empty()) {
    json ckpts = json::object();
    for (const auto& entry : fs::directory_iterator(checkpoint_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("ckpt_final", 0) == 0) ckpts[name] = hex64(file_hash(entry.path()));
    }
    extra["checkpoints"] = ckpts;
  }
  write_manifest(out_dir, cfg, extra);

  std::cout << "scenario " << scenario_name << ": " << points.size()
            << " grid points written to " << csv_path.string() << "\n";
  for (const auto& p : points) {
    std::cout << "  param " << p.param << ": ASR " << p.mean.asr << " +- " << p.stddev.asr
              << ", APE " << p.mean.ape << ", AOE " << p.mean.aoe << ", ABAE " << p.mean.abae
              << "\n";
  }
  return kExitOk;
}

int cmd_selftest(const std::string& config_path) {
  const ff::RunConfig cfg = load_config_or_default(config_path);
  const ff::SystemModel model = ff::resolve_model(cfg);
  const auto checks = ff::run_selftest(model);
  bool all = true;
  for (const auto& c : checks) {
    std::printf("[%s] %-55s tolerance %-18s measured %.3g\n", c.pass ? "PASS" : "FAIL",
                c.name.c_str(), c.tolerance.c_str(), c.measured);
    all = all && c.pass;
  }
  return all ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"freeflyer: spacecraft-manipulator coordinated planning simulator and trainer"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "runs/run", checkpoint_dir, scenario, grid = "0:0.05:0.2";
  std::string seeds_text, trace_file, dump_path, out_file;
  std::uint64_t seed = 1;
  long epochs_override = 0, buffer_override = 0;
  int episodes = 0, workers = 0, trace_horizon = 100, episodes_per_seed = 0;
  bool expert = false, zero = false, print_config = false;

  auto* train = app.add_subcommand("train", "train the dual-agent policy");
  train->add_option("--config", config_path, "config file (key = value)");
  train->add_option("--out", out_dir, "run directory");
  train->add_option("--seed", seed, "master seed override");
  train->add_option("--epochs", epochs_override, "override the epoch count");
  train->add_option("--buffer", buffer_override, "override the buffer size C");
  train->add_flag("--print-config", print_config, "echo the effective config and exit");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or the expert");
  eval->add_option("--config", config_path, "config file");
  eval->add_option("--checkpoint-dir", checkpoint_dir, "run directory with ckpt_final_*.bin");
  eval->add_flag("--expert", expert, "evaluate the RRT*+PID expert (no checkpoint needed)");
  eval->add_flag("--zero", zero, "evaluate the uncontrolled free-floating baseline");
  eval->add_option("--episodes", episodes, "episode count (default 1000)");
  eval->add_option("--seed", seed, "evaluation seed");
  eval->add_option("--workers", workers, "parallel episode workers");
  eval->add_option("--trace-episode", trace_file, "write a single-episode step trace CSV");
  eval->add_option("--trace-horizon", trace_horizon,
                   "horizon for the trace episode (e.g. 100 for the maintenance phase)");
  eval->add_option("--dump-path", dump_path, "write the expert's planned joint path CSV");
  eval->add_option("--out", out_file, "write the metrics table as CSV");

  auto* robust = app.add_subcommand("robustness", "fault/disturbance scenario campaign");
  robust->add_option("--config", config_path, "config file");
  robust->add_option("--checkpoint-dir", checkpoint_dir, "run directory with ckpt_final_*.bin");
  robust->add_flag("--expert", expert, "run the campaign with the expert policy");
  robust->add_option("--scenario", scenario, "scenario name")->required();
  robust->add_option("--grid", grid, "start:step:stop or comma list");
  robust->add_option("--episodes", episodes_per_seed, "episodes per grid point per seed");
  robust->add_option("--seeds", seeds_text, "comma-separated seed list (default 1,2,3)");
  robust->add_option("--out", out_dir, "output directory");
  robust->add_option("--workers", workers, "parallel episode workers");

  auto* self = app.add_subcommand("selftest", "fast invariant suite");
  self->add_option("--config", config_path, "config file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(train)) {
      return cmd_train(config_path, out_dir, seed, epochs_override, buffer_override, print_config);
    }
    if (app.got_subcommand(eval)) {
      return cmd_eval(config_path, checkpoint_dir, expert, zero, episodes, seed, workers,
                      trace_file, trace_horizon, dump_path, out_file);
    }
    if (app.got_subcommand(robust)) {
      return cmd_robustness(config_path, checkpoint_dir, expert, scenario, grid, episodes_per_seed,
                            seeds_text, out_dir, workers);
    }
    if (app.got_subcommand(self)) {
      return cmd_selftest(config_path);
    }
  } catch (const ff::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}
