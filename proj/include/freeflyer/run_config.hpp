#pragma once

#include <iosfwd>
#include <string>

#include "freeflyer/env.hpp"
#include "freeflyer/priors.hpp"
#include "freeflyer/trainer.hpp"

namespace ff {

/// Run-level configuration: structured key-value text with a strict schema
/// (unknown keys are rejected). All defaults equal the published
/// hyperparameter tables.
struct RunConfig {
  std::string model_file;  // empty = embedded default parameter set
  std::uint64_t master_seed = 1;
  int workers = 0;  // 0 = hardware concurrency (evaluation only; training is serial)
  EnvConfig env;
  TrainConfig train;
  ExpertConfig expert;
  int eval_episodes = 1000;
};

RunConfig default_run_config();

std::string run_config_text(const RunConfig& cfg);
RunConfig parse_run_config(const std::string& text);  // throws ConfigError
RunConfig load_run_config(const std::string& path);
void validate_run_config(const RunConfig& cfg);  // throws ConfigError

SystemModel resolve_model(const RunConfig& cfg);

}  // namespace ff
