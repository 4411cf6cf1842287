#include "romance/lpa.hpp"

#include "romance/error.hpp"

namespace romance {

Budget::Budget(int capacity) : capacity_(capacity), remaining_(capacity) {
  if (capacity < 0) throw ConfigError("attack budget must be nonnegative");
}

void Budget::consume() {
  if (remaining_ > 0) --remaining_;
}

JointAction perturb(std::optional<int> victim, const JointAction& chosen, const std::vector<Vec>& q,
                    const Masks& masks, int remaining) {
  if (victim && (*victim < 0 || *victim >= static_cast<int>(chosen.size())))
    throw UsageError("victim index " + std::to_string(*victim) + " out of range");
  JointAction executed = chosen;
  if (!victim || remaining <= 0) return executed;
  const auto v = static_cast<std::size_t>(*victim);
  executed[v] = masked_argmin(q.at(v), masks.at(v));
  return executed;
}

Vec attacker_view(const Vec& state, const Budget& budget) {
  Vec out(state.size() + 1);
  out.head(state.size()) = state;
  out(state.size()) =
      budget.capacity() == 0 ? 0.0 : static_cast<double>(budget.remaining()) / budget.capacity();
  return out;
}

LpaEnv::LpaEnv(std::unique_ptr<Environment> env, int capacity) : env_(std::move(env)), budget_(capacity) {
  if (!env_) throw UsageError("LpaEnv needs an environment");
}

LpaEnv::LpaEnv(const LpaEnv& other)
    : env_(other.env_->clone()), budget_(other.budget_), current_(other.current_),
      attacks_spent_(other.attacks_spent_), actions_changed_(other.actions_changed_) {}

TimeStep LpaEnv::reset(std::uint64_t seed) {
  budget_.reset();
  attacks_spent_ = 0;
  actions_changed_ = 0;
  current_ = env_->reset(seed);
  return current_;
}

LpaStepRecord LpaEnv::step(const JointAction& chosen, std::optional<int> victim, const std::vector<Vec>& q) {
  LpaStepRecord rec;
  rec.chosen = chosen;
  rec.victim = victim;
  rec.budget_before = budget_.remaining();
  rec.executed = perturb(victim, chosen, q, current_.masks, budget_.remaining());
  if (victim && budget_.remaining() > 0) {
    budget_.consume();
    ++attacks_spent_;
  }
  if (rec.executed != chosen) ++actions_changed_;
  rec.budget_after = budget_.remaining();
  rec.result = env_->step(rec.executed);
  current_ = rec.result;
  return rec;
}

Vec LpaEnv::attacker_view() const { return romance::attacker_view(current_.state, budget_); }

TabularMDP build_attacker_mdp(const TabularEnvironment& env, const TabularEgo& ego, int capacity, double gamma) {
  if (capacity < 0) throw ConfigError("attack budget must be nonnegative");
  const TabularMDP base = env.enumerate_tabular();
  const int n_states = base.states();
  const int n_agents = env.spec().n_agents;
  const int null_action = n_agents;
  if (ego.states() != n_states) throw ConfigError("tabular ego does not cover the environment's states");

  TabularMDP m(n_states * (capacity + 1), n_agents + 1, gamma);
  for (int s = 0; s < n_states; ++s) {
    const Masks masks = env.masks_at(s);
    const JointAction chosen = ego.greedy(s, masks);
    for (int k = 0; k <= capacity; ++k) {
      const int sbar = attacker_state_index(s, k, capacity);
      m.set_terminal(sbar, base.terminal(s));
      for (int abar = 0; abar <= n_agents; ++abar) {
        const std::optional<int> victim = abar == null_action ? std::nullopt : std::optional<int>(abar);
        const JointAction executed = perturb(victim, chosen, ego.q_at(s), masks, k);
        const bool spends = victim.has_value() && k > 0;
        const int k_next = spends ? k - 1 : k;
        const int joint = env.encode_joint(executed);
        for (int s2 = 0; s2 < n_states; ++s2) {
          const double pr = base.p(s, joint, s2);
          if (pr == 0.0) continue;
          const int sbar2 = attacker_state_index(s2, k_next, capacity);
          m.p(sbar, abar, sbar2) += pr;
          m.r(sbar, abar, sbar2) = -base.r(s, joint, s2);
        }
      }
    }
    m.initial()[static_cast<std::size_t>(attacker_state_index(s, capacity, capacity))] = base.initial()[static_cast<std::size_t>(s)];
  }
  return m;
}

}  // namespace romance
