#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "romance/attacker.hpp"
#include "romance/ego.hpp"
#include "romance/lpa.hpp"

namespace romance {

/// One episode seen from both sides: the ego view (chosen actions,
/// executed-action rewards) and the attacker view (augmented state, victim,
/// negated reward).
struct DualTrajectory {
  Episode ego;
  std::vector<AttackerTransition> attacker;
  std::vector<JointAction> executed;
  std::vector<std::optional<int>> victims;
  double team_return = 0.0;
  double attacker_discounted_return = 0.0;
  int attacks_spent = 0;
  int actions_changed = 0;
  bool win = false;
};

struct RolloutOptions {
  double epsilon = 0.0;
  /// History window the ego conditions on.
  int window = 4;
  /// Discount for the attacker's return.
  double gamma = 0.99;
};

/// Runs one episode of `ego` under `attacker` in `env`, resetting the
/// budget to K first. The ego and attacker draw from separate streams so a
/// silent attacker leaves the ego's randomness untouched.
DualTrajectory collect_traj(const EgoPolicy& ego, VictimSelector& attacker, LpaEnv& env, std::uint64_t env_seed,
                            const RolloutOptions& opts, Rng& ego_rng, Rng& attacker_rng);

/// Monte-Carlo mean of the attacker's discounted return against a greedy
/// ego over `episodes` fresh rollouts seeded from `seed`.
double quality(const EgoPolicy& ego, VictimSelector& attacker, const LpaEnv& env, int episodes, double gamma,
               int window, std::uint64_t seed);

struct RolloutSummary {
  int episodes = 0;
  double mean_return = 0.0;
  double win_rate = 0.0;
  std::vector<double> returns;
  std::vector<int> wins;
  std::vector<int> attacks;
  int max_attacks = 0;
};

/// Greedy ego episodes against `attacker`; episode e uses env seed seed + e.
RolloutSummary run_episodes(const EgoPolicy& ego, VictimSelector& attacker, const LpaEnv& env, int episodes,
                            int window, std::uint64_t seed);

}  // namespace romance
