#include "romance/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "romance/error.hpp"
#include "romance/lpa.hpp"
#include "romance/regularized.hpp"

namespace romance {

namespace {

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void check_discount(const TabularMDP& mdp) {
  if (!(mdp.gamma() >= 0.0 && mdp.gamma() < 1.0)) throw ConfigError("discount must lie in [0, 1)");
}

int argmax_lowest(const Vec& q) {
  int best = 0;
  for (int a = 1; a < q.size(); ++a)
    if (q(a) > q(best)) best = a;
  return best;
}

template <typename Backup>
ValueTable iterate(const TabularMDP& mdp, double tol, int max_iter, Backup backup) {
  check_discount(mdp);
  ValueTable out;
  out.v.assign(static_cast<std::size_t>(mdp.states()), 0.0);
  std::vector<double> next(out.v.size(), 0.0);
  for (int it = 1; it <= max_iter; ++it) {
    const auto q = q_values(mdp, out.v);
    for (int s = 0; s < mdp.states(); ++s)
      next[static_cast<std::size_t>(s)] = mdp.terminal(s) ? 0.0 : backup(s, q[static_cast<std::size_t>(s)]);
    const double change = sup_diff(next, out.v);
    out.v.swap(next);
    out.iterations = it;
    out.residual = change;
    out.residuals.push_back(change);
    if (change < tol) return out;
  }
  throw NumericalError("iteration did not converge within " + std::to_string(max_iter) + " sweeps");
}

}  // namespace

std::vector<Vec> q_values(const TabularMDP& mdp, const std::vector<double>& v) {
  std::vector<Vec> q(static_cast<std::size_t>(mdp.states()), Vec::Zero(mdp.actions()));
  const double gamma = mdp.gamma();
  for (int s = 0; s < mdp.states(); ++s) {
    if (mdp.terminal(s)) continue;
    for (int a = 0; a < mdp.actions(); ++a) {
      double total = 0.0;
      for (int s2 = 0; s2 < mdp.states(); ++s2) {
        const double pr = mdp.p(s, a, s2);
        if (pr == 0.0) continue;
        const double next = mdp.terminal(s2) ? 0.0 : v[static_cast<std::size_t>(s2)];
        total += pr * (mdp.r(s, a, s2) + gamma * next);
      }
      q[static_cast<std::size_t>(s)](a) = total;
    }
  }
  return q;
}

ValueTable value_iteration(const TabularMDP& mdp, double tol, int max_iter) {
  ValueTable out = iterate(mdp, tol, max_iter, [](int, const Vec& q) { return q.maxCoeff(); });
  const auto q = q_values(mdp, out.v);
  for (const auto& row : q) out.greedy.push_back(argmax_lowest(row));
  out.policy = one_hot_policy(out.greedy, mdp.actions());
  return out;
}

ValueTable soft_value_iteration(const TabularMDP& mdp, const Vec& prior, double lambda, double tol, int max_iter) {
  if (prior.size() != mdp.actions()) throw ConfigError("prior length differs from action count");
  ValueTable out =
      iterate(mdp, tol, max_iter, [&](int, const Vec& q) { return soft_value(q, prior, lambda); });
  const auto q = q_values(mdp, out.v);
  for (const auto& row : q) {
    out.greedy.push_back(argmax_lowest(row));
    out.policy.push_back(soft_policy(row, prior, lambda));
  }
  return out;
}

ValueTable policy_evaluation(const TabularMDP& mdp, const std::vector<Vec>& policy, double tol, int max_iter) {
  if (policy.size() != static_cast<std::size_t>(mdp.states())) throw ConfigError("policy table has wrong state count");
  for (const auto& row : policy) {
    if (row.size() != mdp.actions()) throw ConfigError("policy row has wrong action count");
    if ((row.array() < 0.0).any() || std::abs(row.sum() - 1.0) > 1e-9)
      throw ConfigError("policy row is not a distribution");
  }
  ValueTable out = iterate(mdp, tol, max_iter,
                           [&](int s, const Vec& q) { return policy[static_cast<std::size_t>(s)].dot(q); });
  const auto q = q_values(mdp, out.v);
  for (const auto& row : q) out.greedy.push_back(argmax_lowest(row));
  out.policy = policy;
  return out;
}

double bellman_residual(const TabularMDP& mdp, const std::vector<double>& v) {
  const auto q = q_values(mdp, v);
  double m = 0.0;
  for (int s = 0; s < mdp.states(); ++s) {
    const double backed = mdp.terminal(s) ? 0.0 : q[static_cast<std::size_t>(s)].maxCoeff();
    m = std::max(m, std::abs(backed - v[static_cast<std::size_t>(s)]));
  }
  return m;
}

double soft_bellman_residual(const TabularMDP& mdp, const Vec& prior, double lambda, const std::vector<double>& v) {
  const auto q = q_values(mdp, v);
  double m = 0.0;
  for (int s = 0; s < mdp.states(); ++s) {
    const double backed = mdp.terminal(s) ? 0.0 : soft_value(q[static_cast<std::size_t>(s)], prior, lambda);
    m = std::max(m, std::abs(backed - v[static_cast<std::size_t>(s)]));
  }
  return m;
}

double policy_residual(const TabularMDP& mdp, const std::vector<Vec>& policy, const std::vector<double>& v) {
  const auto q = q_values(mdp, v);
  double m = 0.0;
  for (int s = 0; s < mdp.states(); ++s) {
    const auto i = static_cast<std::size_t>(s);
    const double backed = mdp.terminal(s) ? 0.0 : policy[i].dot(q[i]);
    m = std::max(m, std::abs(backed - v[i]));
  }
  return m;
}

double initial_value(const TabularMDP& mdp, const std::vector<double>& v) {
  double total = 0.0;
  for (std::size_t s = 0; s < v.size(); ++s) total += mdp.initial()[s] * v[s];
  return total;
}

std::vector<Vec> one_hot_policy(const std::vector<int>& actions, int n_actions) {
  std::vector<Vec> out;
  out.reserve(actions.size());
  for (int a : actions) {
    Vec row = Vec::Zero(n_actions);
    row(a) = 1.0;
    out.push_back(row);
  }
  return out;
}

namespace {

enum class AttackedReward { kExpected, kSurrogate };

TabularMDP build_game(const TabularEnvironment& env, const std::vector<std::vector<Vec>>& ego_q,
                      const TabularVictimPolicy& attacker, double gamma, AttackedReward mode) {
  const TabularMDP base = env.enumerate_tabular();
  const int n_states = base.states();
  const int n_agents = env.spec().n_agents;
  const int capacity = attacker.capacity();
  const int n_joint = base.actions();
  if (static_cast<int>(ego_q.size()) != n_states) throw ConfigError("ego utilities do not cover every state");
  if (attacker.n_agents() != n_agents) throw ConfigError("attacker agent count differs from the environment");

  TabularMDP m(n_states * (capacity + 1), n_joint, gamma);
  std::vector<double> mass(static_cast<std::size_t>(n_states));
  std::vector<double> weighted(static_cast<std::size_t>(n_states));
  for (int s = 0; s < n_states; ++s) {
    const Masks masks = env.masks_at(s);
    const auto& q = ego_q[static_cast<std::size_t>(s)];
    for (int k = 0; k <= capacity; ++k) {
      const int sbar = attacker_state_index(s, k, capacity);
      m.set_terminal(sbar, base.terminal(s));
      const Vec& v = attacker.distribution(s, k);
      const double stay = k > 0 ? v(n_agents) : 1.0;
      for (int a = 0; a < n_joint; ++a) {
        for (int s2 = 0; s2 < n_states; ++s2) {
          const double pr = base.p(s, a, s2);
          if (pr == 0.0 || stay == 0.0) continue;
          const int t = attacker_state_index(s2, k, capacity);
          m.p(sbar, a, t) += stay * pr;
          m.r(sbar, a, t) = base.r(s, a, s2);
        }
        if (k == 0) continue;
        std::fill(mass.begin(), mass.end(), 0.0);
        std::fill(weighted.begin(), weighted.end(), 0.0);
        const JointAction chosen = env.decode_joint(a);
        for (int i = 0; i < n_agents; ++i) {
          if (v(i) == 0.0) continue;
          const int forced = env.encode_joint(perturb(i, chosen, q, masks, k));
          for (int s2 = 0; s2 < n_states; ++s2) {
            const double pr = base.p(s, forced, s2);
            const auto j = static_cast<std::size_t>(s2);
            mass[j] += v(i) * pr;
            if (mode == AttackedReward::kExpected)
              weighted[j] += v(i) * pr * base.r(s, forced, s2);
            else
              weighted[j] += v(i) * base.r(s, forced, s2);
          }
        }
        for (int s2 = 0; s2 < n_states; ++s2) {
          const auto j = static_cast<std::size_t>(s2);
          if (mass[j] == 0.0) continue;
          const int t = attacker_state_index(s2, k - 1, capacity);
          m.p(sbar, a, t) += mass[j];
          m.r(sbar, a, t) = mode == AttackedReward::kExpected ? weighted[j] / mass[j] : weighted[j];
        }
      }
    }
    m.initial()[static_cast<std::size_t>(attacker_state_index(s, capacity, capacity))] =
        base.initial()[static_cast<std::size_t>(s)];
  }
  return m;
}

}  // namespace

TabularMDP build_attacked_game(const TabularEnvironment& env, const std::vector<std::vector<Vec>>& ego_q,
                               const TabularVictimPolicy& attacker, double gamma) {
  return build_game(env, ego_q, attacker, gamma, AttackedReward::kExpected);
}

TabularMDP build_surrogate_game(const TabularEnvironment& env, const std::vector<std::vector<Vec>>& ego_q,
                                const TabularVictimPolicy& attacker, double gamma) {
  return build_game(env, ego_q, attacker, gamma, AttackedReward::kSurrogate);
}

std::vector<Vec> joint_policy(const TabularEnvironment& env, const std::vector<std::vector<Vec>>& agent_policy,
                              int capacity) {
  const int n_joint = env.joint_action_count();
  std::vector<Vec> out;
  out.reserve(agent_policy.size() * static_cast<std::size_t>(capacity + 1));
  for (const auto& per_agent : agent_policy) {
    Vec row(n_joint);
    for (int a = 0; a < n_joint; ++a) {
      const JointAction joint = env.decode_joint(a);
      double p = 1.0;
      for (std::size_t i = 0; i < joint.size(); ++i) p *= per_agent[i](joint[i]);
      row(a) = p;
    }
    for (int k = 0; k <= capacity; ++k) out.push_back(row);
  }
  return out;
}

void write_value_csv(const std::filesystem::path& path, const ValueTable& table) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.precision(17);
  out << "state,value,greedy_action\n";
  for (std::size_t s = 0; s < table.v.size(); ++s)
    out << s << ',' << table.v[s] << ',' << (s < table.greedy.size() ? table.greedy[s] : -1) << '\n';
}

}  // namespace romance
