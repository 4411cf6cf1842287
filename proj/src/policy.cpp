#include "romance/policy.hpp"

#include "romance/error.hpp"

namespace romance {

int masked_argmax(const Vec& q, const ActionMask& mask) {
  int best = -1;
  for (int a = 0; a < static_cast<int>(mask.size()); ++a) {
    if (!mask[static_cast<std::size_t>(a)]) continue;
    if (best < 0 || q(a) > q(best)) best = a;
  }
  if (best < 0) throw ContractViolation("empty action mask");
  return best;
}

int masked_argmin(const Vec& q, const ActionMask& mask) {
  int best = -1;
  for (int a = 0; a < static_cast<int>(mask.size()); ++a) {
    if (!mask[static_cast<std::size_t>(a)]) continue;
    if (best < 0 || q(a) < q(best)) best = a;
  }
  if (best < 0) throw ContractViolation("empty action mask");
  return best;
}

int uniform_available(const ActionMask& mask, Rng& rng) {
  int count = 0;
  for (auto m : mask) count += m ? 1 : 0;
  if (count == 0) throw ContractViolation("empty action mask");
  std::uniform_int_distribution<int> pick(0, count - 1);
  int k = pick(rng);
  for (int a = 0; a < static_cast<int>(mask.size()); ++a) {
    if (!mask[static_cast<std::size_t>(a)]) continue;
    if (k-- == 0) return a;
  }
  return -1;
}

JointAction epsilon_greedy(const std::vector<Vec>& q, const Masks& masks, double epsilon, Rng& rng) {
  if (epsilon < 0.0 || epsilon > 1.0) throw UsageError("epsilon outside [0, 1]");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  JointAction out(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) {
    // Draw unconditionally so the stream position does not depend on epsilon.
    const double draw = u(rng);
    out[i] = (epsilon > 0.0 && draw < epsilon) ? uniform_available(masks[i], rng) : masked_argmax(q[i], masks[i]);
  }
  return out;
}

EgoDecision TabularEgo::act(const DecisionContext& ctx, double epsilon, Rng& rng) const {
  if (!ctx.tabular_state) throw UsageError("TabularEgo needs a tabular state");
  EgoDecision d;
  d.q = q_at(*ctx.tabular_state);
  d.actions = epsilon_greedy(d.q, *ctx.masks, epsilon, rng);
  return d;
}

JointAction TabularEgo::greedy(int state, const Masks& masks) const {
  const auto& q = q_at(state);
  JointAction out(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) out[i] = masked_argmax(q[i], masks[i]);
  return out;
}

RandomAttacker::RandomAttacker(int n_agents, double attack_probability) : n_agents_(n_agents), p_(attack_probability) {
  if (n_agents < 1) throw ConfigError("RandomAttacker needs agents");
  if (p_ < 0.0 || p_ > 1.0) throw ConfigError("attack probability outside [0, 1]");
}

std::optional<int> RandomAttacker::select(const AttackContext& ctx, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> who(0, n_agents_ - 1);
  const double draw = u(rng);
  const int victim = who(rng);
  if (ctx.remaining <= 0 || draw >= p_) return std::nullopt;
  return victim;
}

TabularVictimPolicy::TabularVictimPolicy(int n_agents, int capacity, std::vector<Vec> table)
    : n_agents_(n_agents), capacity_(capacity), table_(std::move(table)) {
  for (const auto& row : table_) {
    if (row.size() != n_agents_ + 1) throw ConfigError("victim table row has wrong length");
    if (std::abs(row.sum() - 1.0) > 1e-9 || (row.array() < 0.0).any())
      throw ConfigError("victim table row is not a distribution");
  }
}

const Vec& TabularVictimPolicy::distribution(int state, int k) const {
  return table_.at(static_cast<std::size_t>(state * (capacity_ + 1) + k));
}

std::optional<int> TabularVictimPolicy::select(const AttackContext& ctx, Rng& rng) {
  if (!ctx.tabular_state) throw UsageError("TabularVictimPolicy needs a tabular state");
  const int choice = sample_categorical(distribution(*ctx.tabular_state, ctx.remaining), rng);
  if (choice == n_agents_) return std::nullopt;
  return choice;
}

int sample_categorical(const Vec& probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double draw = u(rng);
  double acc = 0.0;
  int last_positive = -1;
  for (int i = 0; i < probs.size(); ++i) {
    if (probs(i) <= 0.0) continue;
    acc += probs(i);
    last_positive = i;
    if (draw < acc) return i;
  }
  if (last_positive < 0) throw UsageError("categorical distribution has no mass");
  return last_positive;
}

}  // namespace romance
