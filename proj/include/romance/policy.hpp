#pragma once

#include <optional>
#include <random>
#include <vector>

#include "romance/env.hpp"

namespace romance {

using Rng = std::mt19937_64;

/// Everything an ego policy may condition on at one tick.
struct DecisionContext {
  const Mat* histories = nullptr;  // n_agents x history features
  const Masks* masks = nullptr;
  std::optional<int> tabular_state;
};

struct EgoDecision {
  JointAction actions;
  /// Per-agent utility vectors; the perturbation reads these.
  std::vector<Vec> q;
};

class EgoPolicy {
 public:
  virtual ~EgoPolicy() = default;
  virtual EgoDecision act(const DecisionContext& ctx, double epsilon, Rng& rng) const = 0;
};

/// Highest-valued available action; ties go to the lowest index.
int masked_argmax(const Vec& q, const ActionMask& mask);
/// Lowest-valued available action; ties go to the lowest index.
int masked_argmin(const Vec& q, const ActionMask& mask);
int uniform_available(const ActionMask& mask, Rng& rng);

/// Per agent: uniform available action with probability epsilon, else the
/// masked argmax.
JointAction epsilon_greedy(const std::vector<Vec>& q, const Masks& masks, double epsilon, Rng& rng);

/// Ego policy given as per-state, per-agent utility tables over a tabular
/// environment's states. Acts greedily on them.
class TabularEgo final : public EgoPolicy {
 public:
  TabularEgo() = default;
  explicit TabularEgo(std::vector<std::vector<Vec>> q) : q_(std::move(q)) {}

  EgoDecision act(const DecisionContext& ctx, double epsilon, Rng& rng) const override;

  const std::vector<Vec>& q_at(int state) const { return q_.at(static_cast<std::size_t>(state)); }
  JointAction greedy(int state, const Masks& masks) const;
  int states() const { return static_cast<int>(q_.size()); }

 private:
  std::vector<std::vector<Vec>> q_;
};

/// Inputs to a victim-selection decision.
struct AttackContext {
  const Vec* observation = nullptr;  // attacker view: state features + k/K
  std::optional<int> tabular_state;
  int remaining = 0;
  int capacity = 0;
};

/// Chooses which agent (or nobody) to perturb at one tick.
class VictimSelector {
 public:
  virtual ~VictimSelector() = default;
  virtual std::optional<int> select(const AttackContext& ctx, Rng& rng) = 0;
};

class NullAttacker final : public VictimSelector {
 public:
  std::optional<int> select(const AttackContext&, Rng&) override { return std::nullopt; }
};

/// Attacks with fixed per-step probability, victim uniform over agents.
class RandomAttacker final : public VictimSelector {
 public:
  RandomAttacker(int n_agents, double attack_probability);
  std::optional<int> select(const AttackContext& ctx, Rng& rng) override;
  double attack_probability() const { return p_; }

 private:
  int n_agents_;
  double p_;
};

/// Victim distribution per tabular (state, k): table[state * (K+1) + k]
/// holds n_agents + 1 probabilities, null last.
class TabularVictimPolicy final : public VictimSelector {
 public:
  TabularVictimPolicy(int n_agents, int capacity, std::vector<Vec> table);
  std::optional<int> select(const AttackContext& ctx, Rng& rng) override;
  const Vec& distribution(int state, int k) const;
  int capacity() const { return capacity_; }
  int n_agents() const { return n_agents_; }

 private:
  int n_agents_;
  int capacity_;
  std::vector<Vec> table_;
};

/// Samples an index from a probability vector.
int sample_categorical(const Vec& probs, Rng& rng);

}  // namespace romance
