#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "romance/env.hpp"
#include "romance/policy.hpp"
#include "romance/tabular_mdp.hpp"

namespace romance {

/// Per-episode attack budget: capacity K and remaining k, 0 <= k <= K.
class Budget {
 public:
  explicit Budget(int capacity = 0);
  int capacity() const { return capacity_; }
  int remaining() const { return remaining_; }
  void reset() { remaining_ = capacity_; }
  /// Spends one attack; no-op at zero.
  void consume();

 private:
  int capacity_;
  int remaining_;
};

/// Executed joint action for a victim choice. With a victim and k > 0 the
/// victim's action becomes its lowest-valued available action (lowest
/// index on ties); otherwise the chosen action passes through unchanged.
JointAction perturb(std::optional<int> victim, const JointAction& chosen, const std::vector<Vec>& q,
                    const Masks& masks, int remaining);

/// State features followed by k / K (0 when K = 0).
Vec attacker_view(const Vec& state, const Budget& budget);

struct LpaStepRecord {
  JointAction chosen;
  std::optional<int> victim;
  JointAction executed;
  int budget_before = 0;
  int budget_after = 0;
  StepResult result;

  bool budget_spent() const { return budget_after < budget_before; }
  bool action_changed() const { return executed != chosen; }
};

/// Environment wrapper adding an action adversary with a per-episode budget.
/// The budget is decremented whenever a victim is named while k > 0, even if
/// the forced action happens to equal the chosen one; both that count and
/// the count of actually altered steps are tracked.
class LpaEnv {
 public:
  LpaEnv(std::unique_ptr<Environment> env, int capacity);
  LpaEnv(const LpaEnv& other);
  LpaEnv& operator=(const LpaEnv&) = delete;

  TimeStep reset(std::uint64_t seed);
  LpaStepRecord step(const JointAction& chosen, std::optional<int> victim, const std::vector<Vec>& q);

  const Budget& budget() const { return budget_; }
  Vec attacker_view() const;
  Environment& env() { return *env_; }
  const Environment& env() const { return *env_; }

  int attacks_spent() const { return attacks_spent_; }
  int actions_changed() const { return actions_changed_; }

 private:
  std::unique_ptr<Environment> env_;
  Budget budget_;
  TimeStep current_;
  int attacks_spent_ = 0;
  int actions_changed_ = 0;
};

/// Attacker MDP for a frozen tabular ego: states (s, k) indexed s*(K+1)+k,
/// actions 0..n-1 (victim) and n (null), reward the negated team reward of
/// the executed action, start concentrated on (s0, K).
TabularMDP build_attacker_mdp(const TabularEnvironment& env, const TabularEgo& ego, int capacity, double gamma);

inline int attacker_state_index(int state, int k, int capacity) { return state * (capacity + 1) + k; }

}  // namespace romance
