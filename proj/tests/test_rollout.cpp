#include <doctest.h>

#include <cmath>
#include <random>

#include "romance/chain_coop.hpp"
#include "romance/lpa.hpp"
#include "romance/oracle.hpp"
#include "romance/rollout.hpp"

using namespace romance;

namespace {

// Every agent prefers moving right, then staying, then moving left.
TabularEgo walk_right(int states) {
  Vec q(3);
  q << -1.0, 0.0, 1.0;
  return TabularEgo(std::vector<std::vector<Vec>>(static_cast<std::size_t>(states), std::vector<Vec>(2, q)));
}

std::vector<Vec> random_victim_table(int states, int n, int capacity, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<Vec> table;
  for (int i = 0; i < states * (capacity + 1); ++i) {
    Vec row(n + 1);
    for (int a = 0; a <= n; ++a) row(a) = u(rng);
    table.push_back(row / row.sum());
  }
  return table;
}

}  // namespace

TEST_CASE("null attacker leaves the rollout identical to an unattacked one") {
  const TabularEgo ego = walk_right(26);
  LpaEnv attacked(std::make_unique<ChainCoop>(), 3);
  LpaEnv plain(std::make_unique<ChainCoop>(), 0);
  NullAttacker none;
  RolloutOptions opts;
  opts.epsilon = 0.3;
  Rng e1(5), a1(6), e2(5), a2(99);
  for (int ep = 0; ep < 20; ++ep) {
    const auto x = collect_traj(ego, none, attacked, 100 + ep, opts, e1, a1);
    const auto y = collect_traj(ego, none, plain, 100 + ep, opts, e2, a2);
    CHECK(x.ego.actions == y.ego.actions);
    CHECK(x.ego.rewards == y.ego.rewards);
    CHECK(x.executed == x.ego.actions);
    CHECK(x.attacks_spent == 0);
    CHECK(x.actions_changed == 0);
  }
}

TEST_CASE("attacker rewards are the negated team rewards and attacks respect the budget") {
  const TabularEgo ego = walk_right(26);
  for (int K : {0, 1, 2, 3}) {
    LpaEnv env(std::make_unique<ChainCoop>(), K);
    RandomAttacker random(2, 0.7);
    RolloutOptions opts;
    opts.epsilon = 0.2;
    Rng er(1), ar(2);
    for (int ep = 0; ep < 200; ++ep) {
      const auto t = collect_traj(ego, random, env, ep, opts, er, ar);
      REQUIRE(t.attacker.size() == t.ego.rewards.size());
      for (std::size_t i = 0; i < t.attacker.size(); ++i) CHECK(t.attacker[i].reward == -t.ego.rewards[i]);
      CHECK(t.attacks_spent <= K);
      CHECK(t.actions_changed <= t.attacks_spent);
      int named_with_budget = 0;
      for (std::size_t i = 0; i < t.victims.size(); ++i) {
        const double k_frac = t.attacker[i].obs(t.attacker[i].obs.size() - 1);
        if (t.victims[i] && K > 0 && k_frac > 0.0) ++named_with_budget;
      }
      CHECK(named_with_budget == t.attacks_spent);
    }
  }
}

TEST_CASE("quality against a silent attacker is the negated discounted ego return") {
  const TabularEgo ego = walk_right(26);
  LpaEnv env(std::make_unique<ChainCoop>(), 2);
  NullAttacker none;
  CHECK(quality(ego, none, env, 4, 0.95, 4, 3) == doctest::Approx(-std::pow(0.95, 3)).epsilon(1e-12));

  // Zero reward at every step: an ego that never moves never scores.
  Vec stay(3);
  stay << 0.0, 1.0, 0.0;
  const TabularEgo idle(std::vector<std::vector<Vec>>(26, std::vector<Vec>(2, stay)));
  RandomAttacker random(2, 0.5);
  CHECK(quality(idle, random, env, 4, 0.95, 4, 3) == 0.0);
}

TEST_CASE("quality estimate agrees with exact policy evaluation of the attacker") {
  ChainCoop chain;
  const int K = 2;
  const TabularEgo ego = walk_right(26);
  const auto table = random_victim_table(26, 2, K, 17);
  TabularVictimPolicy victim(2, K, table);
  const TabularMDP m = build_attacker_mdp(chain, ego, K, 0.95);
  const double exact = initial_value(m, policy_evaluation(m, table).v);

  LpaEnv env(std::make_unique<ChainCoop>(), K);
  const int episodes = 64;
  const double estimate = quality(ego, victim, env, episodes, 0.95, 4, 11);

  // Spread of the same 64 episodes.
  Rng er(11 ^ 0x9e3779b97f4a7c15ULL), ar(11);
  RolloutOptions opts;
  opts.gamma = 0.95;
  double sum = 0.0, sq = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const double g = collect_traj(ego, victim, env, 11 + e, opts, er, ar).attacker_discounted_return;
    sum += g;
    sq += g * g;
  }
  CHECK(sum / episodes == doctest::Approx(estimate).epsilon(1e-12));
  const double var = (sq - sum * sum / episodes) / (episodes - 1);
  const double stderr_ = std::sqrt(var / episodes);
  CHECK(std::abs(estimate - exact) <= 2.0 * stderr_ + 1e-12);
  CHECK(stderr_ > 0.0);
}

TEST_CASE("run_episodes is reproducible and counts attacks") {
  const TabularEgo ego = walk_right(26);
  const LpaEnv env(std::make_unique<ChainCoop>(), 2);
  RandomAttacker a(2, 0.5), b(2, 0.5);
  const auto x = run_episodes(ego, a, env, 30, 4, 9);
  const auto y = run_episodes(ego, b, env, 30, 4, 9);
  CHECK(x.returns == y.returns);
  CHECK(x.attacks == y.attacks);
  CHECK(x.max_attacks <= 2);
  CHECK(x.episodes == 30);
  CHECK(x.win_rate >= 0.0);
  CHECK(x.win_rate <= 1.0);
}
