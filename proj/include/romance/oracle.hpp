#pragma once

#include <filesystem>
#include <vector>

#include "romance/env.hpp"
#include "romance/policy.hpp"
#include "romance/tabular_mdp.hpp"

namespace romance {

/// One value per state plus the policy that produced or is greedy for it.
struct ValueTable {
  std::vector<double> v;
  std::vector<int> greedy;
  /// Per-state action distribution (soft or evaluated policy; one-hot
  /// greedy for hard value iteration).
  std::vector<Vec> policy;
  int iterations = 0;
  /// Sup-norm change of the last sweep.
  double residual = 0.0;
  /// Sup-norm change of every sweep, in order.
  std::vector<double> residuals;
};

/// Q(s, a) = sum_s' P (R + gamma V(s')), with V = 0 at terminal states.
std::vector<Vec> q_values(const TabularMDP& mdp, const std::vector<double>& v);

/// Maximizing value iteration. Greedy ties go to the lowest action index.
ValueTable value_iteration(const TabularMDP& mdp, double tol = 1e-10, int max_iter = 1000000);

/// Fixed point of V(s) = lambda log sum_a p(a) exp(Q(s, a) / lambda) and
/// the matching policy p(a) exp(Q / lambda) / Z.
ValueTable soft_value_iteration(const TabularMDP& mdp, const Vec& prior, double lambda, double tol = 1e-10,
                                int max_iter = 1000000);

/// Iterative evaluation of a per-state action distribution.
ValueTable policy_evaluation(const TabularMDP& mdp, const std::vector<Vec>& policy, double tol = 1e-10,
                             int max_iter = 1000000);

/// One more backup of each operator, for post-hoc residual checks.
double bellman_residual(const TabularMDP& mdp, const std::vector<double>& v);
double soft_bellman_residual(const TabularMDP& mdp, const Vec& prior, double lambda, const std::vector<double>& v);
double policy_residual(const TabularMDP& mdp, const std::vector<Vec>& policy, const std::vector<double>& v);

/// Expected value under the initial distribution.
double initial_value(const TabularMDP& mdp, const std::vector<double>& v);

/// Deterministic policy table: one-hot rows.
std::vector<Vec> one_hot_policy(const std::vector<int>& actions, int n_actions);

/// Ego-side model of the attacked game for a fixed stochastic victim policy:
/// states (s, k) indexed s*(K+1)+k, actions are the ego's joint actions,
/// transitions and rewards are the exact expectation over the victim draw.
/// `ego_q` supplies the utilities the perturbation minimizes.
TabularMDP build_attacked_game(const TabularEnvironment& env, const std::vector<std::vector<Vec>>& ego_q,
                               const TabularVictimPolicy& attacker, double gamma);

/// The surrogate game whose value lower-bounds the attacked game for
/// nonnegative rewards: on the attacked branch the next-state probability is
/// sum_i v(i) P(s'|s, g_i(a)) and the reward sum_i v(i) R(s, g_i(a), s').
TabularMDP build_surrogate_game(const TabularEnvironment& env, const std::vector<std::vector<Vec>>& ego_q,
                                const TabularVictimPolicy& attacker, double gamma);

/// Joint-action distribution per (s, k) state from independent per-agent
/// distributions per environment state: agent_policy[s][i].
std::vector<Vec> joint_policy(const TabularEnvironment& env, const std::vector<std::vector<Vec>>& agent_policy,
                              int capacity);

/// Writes "state,value,greedy_action" rows.
void write_value_csv(const std::filesystem::path& path, const ValueTable& table);

}  // namespace romance
