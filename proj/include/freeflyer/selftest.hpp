#pragma once

#include <string>
#include <vector>

#include "freeflyer/env.hpp"

namespace ff {

/// Fast invariant suite behind `freeflyer selftest`: each check reports its
/// name, tolerance, a measured value and pass/fail.
struct SelfCheck {
  std::string name;
  std::string tolerance;
  double measured = 0.0;
  bool pass = false;
};

SelfCheck selftest_conservation(const SystemModel& model, int trials = 10);
SelfCheck selftest_gradients();
/// Reward-oracle check against hand-computed values; feed a perturbed config
/// to verify the check actually trips (mutation canary).
SelfCheck selftest_reward_oracle(const RewardConfig& cfg);
SelfCheck selftest_schedule();

std::vector<SelfCheck> run_selftest(const SystemModel& model);

}  // namespace ff
