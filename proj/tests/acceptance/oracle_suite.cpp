#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "criteria.hpp"
#include "romance/attacker.hpp"
#include "romance/chain_coop.hpp"
#include "romance/ego.hpp"
#include "romance/evolution.hpp"
#include "romance/harness.hpp"
#include "romance/lpa.hpp"
#include "romance/oracle.hpp"
#include "romance/regularized.hpp"
#include "romance/rollout.hpp"
#include "romance/stats.hpp"
#include "romance/trainers.hpp"

namespace acceptance {

using namespace romance;

namespace {

constexpr double kGamma = 0.95;

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// Every agent prefers moving right, then staying, then moving left.
TabularEgo walk_right(const ChainCoop& env) {
  Vec q(3);
  q << -1.0, 0.0, 1.0;
  return TabularEgo(std::vector<std::vector<Vec>>(static_cast<std::size_t>(env.tabular_state_count()),
                                                  std::vector<Vec>(static_cast<std::size_t>(env.spec().n_agents), q)));
}

Criterion sprq_consistency() {
  Criterion c{1, false, ""};
  ChainCoopConfig cc;
  cc.goal_reward = 10.0;
  const ChainCoop chain(cc);
  const int K = 2;
  const int n = chain.spec().n_agents;
  const TabularEgo ego = walk_right(chain);
  AttackerConfig acfg;
  acfg.gamma = kGamma;
  const Vec prior = reference_prior(n, acfg.delta);
  const TabularMDP m = build_attacker_mdp(chain, ego, K, kGamma);

  // Soft policy has the prior-times-exponentiated-Q form.
  const ValueTable soft = soft_value_iteration(m, prior, acfg.lambda, 1e-12);
  const auto q = q_values(m, soft.v);
  double form_err = 0.0;
  for (int s = 0; s < m.states(); ++s) {
    if (m.terminal(s)) continue;
    const Vec expected = soft_policy(q[static_cast<std::size_t>(s)], prior, acfg.lambda);
    form_err = std::max(form_err, (expected - soft.policy[static_cast<std::size_t>(s)]).cwiseAbs().maxCoeff());
  }
  const double oracle = initial_value(m, policy_evaluation(m, soft.policy, 1e-12).v);

  // Train the neural attacker on at most 50k transitions.
  Rng init(11), act(12), upd(13), ego_rng(14);
  acfg.lr = 1e-3;
  acfg.batch_size = 64;
  acfg.target_interval = 100;
  LpaEnv env(std::make_unique<ChainCoop>(cc), K);
  Attacker attacker(chain.spec().state_size + 1, n, acfg, init);
  RolloutOptions opts;
  opts.gamma = kGamma;
  long transitions = 0;
  std::uint64_t episode = 0;
  std::vector<Attacker*> members{&attacker};
  while (transitions < 50000) {
    AttackerSelector sel(attacker, false);
    DualTrajectory t = collect_traj(ego, sel, env, episode++, opts, ego_rng, act);
    for (auto& tr : t.attacker) {
      attacker.remember(std::move(tr));
      ++transitions;
      if (attacker.replay_size() >= static_cast<std::size_t>(acfg.batch_size))
        update_population(members, 0.0, false, upd);
    }
  }
  AttackerSelector trained(attacker, false);
  const double mc = quality(ego, trained, env, 20000, kGamma, 4, 99);
  const double rel = std::abs(mc - oracle) / std::abs(oracle);
  c.passed = form_err <= 1e-10 && rel <= 0.05;
  c.detail = fmt("soft policy form max err %.2e (<= 1e-10); trained quality %.4f vs soft-optimal %.4f, rel %.2f%% (<= 5%%)",
                 form_err, mc, oracle, 100.0 * rel) +
             " after " + std::to_string(transitions) + " transitions";
  return c;
}

Criterion bisimulation() {
  Criterion c{2, true, ""};
  const ChainCoop chain;
  const int K = 2;
  const int n = chain.spec().n_agents;
  const TabularEgo ego = walk_right(chain);
  const TabularMDP m = build_attacker_mdp(chain, ego, K, kGamma);
  const LpaEnv env(std::make_unique<ChainCoop>(), K);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::uniform_int_distribution<int> pick(0, n);
  double worst_stochastic = 0.0, worst_deterministic = 0.0;
  for (int p = 0; p < 10; ++p) {
    const bool deterministic = p < 4;
    std::vector<Vec> table;
    for (int i = 0; i < m.states(); ++i) {
      Vec row = Vec::Zero(n + 1);
      if (deterministic) {
        row(pick(rng)) = 1.0;
      } else {
        for (int a = 0; a <= n; ++a) row(a) = u(rng);
        row /= row.sum();
      }
      table.push_back(row);
    }
    TabularVictimPolicy victim(n, K, table);
    const double exact = initial_value(m, policy_evaluation(m, table, 1e-13).v);
    const double mc = quality(ego, victim, env, 10000, kGamma, 4, 1000 + p);
    const double err = std::abs(mc - exact);
    if (deterministic) {
      worst_deterministic = std::max(worst_deterministic, err);
      if (err > 1e-9) c.passed = false;
    } else {
      worst_stochastic = std::max(worst_stochastic, err);
      if (err > 1e-2) c.passed = false;
    }
  }
  c.detail = fmt("10 victim policies x 10000 episodes: stochastic max |MC - exact| %.2e (<= 1e-2), "
                 "deterministic max %.2e (<= 1e-9 solver tol)",
                 worst_stochastic, worst_deterministic);
  return c;
}

Criterion lower_bound() {
  Criterion c{3, true, ""};
  const ChainCoop chain;
  const int K = 2;
  const int n = chain.spec().n_agents;
  const int S = chain.tabular_state_count();
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec> table;
  for (int i = 0; i < S * (K + 1); ++i) {
    Vec row(n + 1);
    for (int a = 0; a <= n; ++a) row(a) = u(rng) + 0.05;
    table.push_back(row / row.sum());
  }
  const TabularVictimPolicy attacker(n, K, table);
  double worst_gap = -1e300;
  double total_gap = 0.0;
  long compared = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<Vec>> ego_q(static_cast<std::size_t>(S)), ego_pi(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s)
      for (int i = 0; i < n; ++i) {
        Vec qi(3);
        for (int a = 0; a < 3; ++a) qi(a) = u(rng);
        ego_q[static_cast<std::size_t>(s)].push_back(qi);
        const Vec pi = (qi.array() * (1.0 + 4.0 * u(rng))).exp();
        ego_pi[static_cast<std::size_t>(s)].push_back(pi / pi.sum());
      }
    const TabularMDP attacked = build_attacked_game(chain, ego_q, attacker, kGamma);
    const TabularMDP surrogate = build_surrogate_game(chain, ego_q, attacker, kGamma);
    const auto pi = joint_policy(chain, ego_pi, K);
    const auto hat = policy_evaluation(attacked, pi, 1e-12);
    const auto tilde = policy_evaluation(surrogate, pi, 1e-12);
    for (std::size_t s = 0; s < hat.v.size(); ++s) {
      worst_gap = std::max(worst_gap, tilde.v[s] - hat.v[s]);
      total_gap += hat.v[s] - tilde.v[s];
      ++compared;
      if (tilde.v[s] > hat.v[s] + 1e-9) c.passed = false;
    }
  }
  c.detail = fmt("20 random ego policies: max (V_surrogate - V_attacked) over all states %.3e (<= 1e-9), "
                 "mean slack %.3e",
                 worst_gap, total_gap / static_cast<double>(compared));
  return c;
}

// Shared instance generators for the gradient suite.
AttackerBatch random_batch(int size, int view, int n, Rng& rng) {
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> act(0, n);
  std::vector<AttackerTransition> ts;
  for (int i = 0; i < size; ++i) {
    AttackerTransition t;
    t.obs = Vec::NullaryExpr(view, [&] { return normal(rng); });
    t.next_obs = Vec::NullaryExpr(view, [&] { return normal(rng); });
    t.action = act(rng);
    t.reward = normal(rng);
    t.done = i % 3 == 0;
    ts.push_back(t);
  }
  std::vector<const AttackerTransition*> ptrs;
  for (const auto& t : ts) ptrs.push_back(&t);
  return make_attacker_batch(ptrs);
}

Episode random_episode(const EgoDims& d, int length, bool terminal, Rng& rng) {
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> act(0, d.n_actions - 1);
  Episode ep;
  for (int t = 0; t <= length; ++t) {
    std::vector<Vec> obs;
    for (int i = 0; i < d.n_agents; ++i) obs.push_back(Vec::NullaryExpr(d.obs_size, [&] { return normal(rng); }));
    ep.observations.push_back(obs);
    ep.states.push_back(Vec::NullaryExpr(d.state_size, [&] { return normal(rng); }));
    Masks mk(static_cast<std::size_t>(d.n_agents), ActionMask(static_cast<std::size_t>(d.n_actions), 1));
    mk[0][0] = 0;
    ep.masks.push_back(mk);
    if (t < length) {
      JointAction a;
      for (int i = 0; i < d.n_agents; ++i) a.push_back(act(rng));
      ep.actions.push_back(a);
      ep.rewards.push_back(normal(rng));
    }
  }
  ep.terminal = terminal;
  return ep;
}

Criterion gradients() {
  Criterion c{4, true, ""};
  const double tol = 1e-4;
  struct Tally {
    int passed = 0;
    double worst = 0.0;
  };
  Tally sprq, div, pop, td;
  auto note = [&](Tally& t, const GradCheckReport& r) {
    t.worst = std::max(t.worst, r.max_rel_error);
    if (r.passed) ++t.passed;
  };
  Rng rng(41);
  std::uniform_int_distribution<int> agents(1, 3), views(2, 5), sizes(3, 8);
  std::uniform_real_distribution<double> lam(0.04, 1.0), alpha(0.0, 0.5), smooth(0.0, 0.05);
  for (int inst = 0; inst < 100; ++inst) {
    const int n = agents(rng), view = views(rng);
    const MlpShape shape{{view, 6, n + 1}, Activation::kTanh};
    const Vec prior = reference_prior(n, 0.05);
    const double lambda = lam(rng);
    ParamSet p1 = make_mlp(shape, rng), p2 = make_mlp(shape, rng);
    const ParamSet t1 = make_mlp(shape, rng), t2 = make_mlp(shape, rng);
    const AttackerBatch b1 = random_batch(sizes(rng), view, n, rng), b2 = random_batch(sizes(rng), view, n, rng);
    const Vec y1 = sprq_target(t1, shape, b1, lambda, 0.99, prior);
    const Vec y2 = sprq_target(t2, shape, b2, lambda, 0.99, prior);
    const Mat points = Mat::Random(sizes(rng), view);
    const double a = alpha(rng), b = smooth(rng);

    note(sprq, grad_check([&](ad::Graph& g) { return sprq_loss(g, p1, shape, b1, y1); }, {&p1}, tol));
    note(div, grad_check([&](ad::Graph& g) { return diversity_loss(g, {&p1, &p2}, shape, points, lambda, prior, b); },
                         {&p1, &p2}, tol));
    note(pop, grad_check(
                  [&](ad::Graph& g) {
                    return population_loss(g, {&p1, &p2}, shape, {b1, b2}, {y1, y2}, points, a, lambda, prior, b);
                  },
                  {&p1, &p2}, tol));

    EgoDims d;
    d.n_agents = agents(rng) + 1;
    d.n_actions = 3 + inst % 2;
    d.obs_size = 2;
    d.state_size = 3;
    d.window = 2;
    EgoConfig cfg;
    cfg.mixer = inst % 2 == 0 ? MixerKind::kQmix : MixerKind::kVdn;
    cfg.hidden = 6;
    cfg.embed = 4;
    cfg.activation = Activation::kTanh;
    EgoNets online = make_ego_nets(d, cfg, rng);
    const EgoNets target = make_ego_nets(d, cfg, rng);
    const Episode e1 = random_episode(d, 3, true, rng), e2 = random_episode(d, 2, false, rng);
    const EgoBatch batch = make_ego_batch({&e1, &e2}, d);
    std::vector<ParamSet*> params{&online.agent};
    if (cfg.mixer == MixerKind::kQmix) params.push_back(&online.mixer);
    note(td, grad_check([&](ad::Graph& g) { return td_loss(g, online, target, batch, d, cfg); }, params, tol));
  }
  c.passed = sprq.passed == 100 && div.passed == 100 && pop.passed == 100 && td.passed == 100;
  c.detail = "passed/100 (worst rel err, tol 1e-4): sprq " + std::to_string(sprq.passed) + fmt(" (%.1e)", sprq.worst) +
             ", diversity " + std::to_string(div.passed) + fmt(" (%.1e)", div.worst) + ", population " +
             std::to_string(pop.passed) + fmt(" (%.1e)", pop.worst) + ", td " + std::to_string(td.passed) +
             fmt(" (%.1e)", td.worst);
  return c;
}

Criterion budget_invariant() {
  Criterion c{5, true, ""};
  long episodes = 0, violations = 0;
  int worst = 0;
  const int K = 2;
  std::vector<EgoLearner> egos;
  std::vector<Attacker> held_out;
  TrainConfig base;
  base.env.id = "chain_coop";
  base.ego.hidden = 16;
  base.ego.embed = 8;
  base.attacker.hidden = 16;
  base.attacker.batch_size = 16;
  base.budget = K;
  base.population = 4;
  base.archive_capacity = 6;
  base.generations = 40;
  base.attacker_phases = 2;
  base.ego_phases = 2;
  base.ego_batch_episodes = 8;
  base.quality_episodes = 2;
  base.eval_every = 10;
  base.eval_episodes = 16;
  for (Method m : {Method::kRomance, Method::kRarl, Method::kRap, Method::kRandom, Method::kVanilla}) {
    TrainConfig cfg = base;
    cfg.method = m;
    cfg.seed = 50 + static_cast<std::uint64_t>(m);
    TrainResult r = train(cfg);
    episodes += r.trace.episodes;
    violations += r.trace.budget_violations;
    worst = std::max(worst, r.trace.max_attacks);
    if (m == Method::kRomance)
      for (const auto& e : r.archive->entries()) held_out.push_back(e.attacker);
    egos.push_back(std::move(r.ego));
  }
  for (std::size_t i = 0; i < egos.size(); ++i)
    for (const char* protocol : {"natural", "random", "ega"}) {
      const RolloutSummary s = evaluate_protocol(egos[i], protocol, base, K, held_out, 250, 700 + i);
      episodes += s.episodes;
      for (int a : s.attacks) {
        worst = std::max(worst, a);
        if (a > (std::string(protocol) == "natural" ? 0 : K)) ++violations;
      }
    }
  c.passed = episodes >= 10000 && violations == 0;
  c.detail = std::to_string(episodes) + " episodes over 5 trainers and 3 protocols (>= 10000), max attacks " +
             std::to_string(worst) + " with K = " + std::to_string(K) + ", violations " + std::to_string(violations);
  return c;
}

Criterion monotonicity() {
  Criterion c{6, true, ""};
  Rng rng(61);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> agents(2, 5);
  double worst = 0.0;
  for (int probe = 0; probe < 1000; ++probe) {
    EgoDims d;
    d.n_agents = agents(rng);
    d.n_actions = 3;
    d.obs_size = 2;
    d.state_size = 4;
    d.window = 1;
    EgoConfig cfg;
    cfg.mixer = MixerKind::kQmix;
    cfg.hidden = 8;
    cfg.embed = 8;
    const EgoNets nets = make_ego_nets(d, cfg, rng);
    const Mat state = Mat::NullaryExpr(1, d.state_size, [&] { return 3.0 * normal(rng); });
    const Mat qs = Mat::NullaryExpr(1, d.n_agents, [&] { return 5.0 * normal(rng); });
    const double base = mix_eval(nets, cfg.mixer, qs, state, cfg.embed)(0, 0);
    for (int i = 0; i < d.n_agents; ++i) {
      Mat up = qs;
      up(0, i) += 1e-3;
      const double drop = base - mix_eval(nets, cfg.mixer, up, state, cfg.embed)(0, 0);
      worst = std::max(worst, drop);
      if (drop > 1e-9) c.passed = false;
    }
  }
  c.detail = fmt("1000 random QMIX probes, every agent bumped by 1e-3: largest Q_tot decrease %.2e (<= 1e-9)", worst);
  return c;
}

Criterion wilcoxon() {
  Criterion c{7, true, ""};
  const double p = wilcoxon_exact({1, 2, 3}, {4, 5, 6}).p_value;
  const std::vector<double> values{0.3, 1.1, 1.7, 2.2, 2.9, 3.4, 4.0, 4.8, 5.5, 6.1};
  // Worst |normal - exact| by size of the first group; the gate is the 5/5 splits.
  std::vector<double> worst(6, 0.0);
  for (int mask = 1; mask < 1023; ++mask) {
    std::vector<double> a, b;
    for (int i = 0; i < 10; ++i) (mask >> i & 1 ? a : b).push_back(values[static_cast<std::size_t>(i)]);
    if (a.size() > 5) continue;
    auto& w = worst[a.size()];
    w = std::max(w, std::abs(wilcoxon_normal(a, b).p_value - wilcoxon_exact(a, b).p_value));
  }
  c.passed = std::abs(p - 0.1) < 1e-12 && worst[5] <= 0.02;
  c.detail = fmt("exact p(1,2,3 | 4,5,6) = %.6f (0.1); max |normal - exact| over the 252 5/5 splits %.4f (<= 0.02)",
                 p, worst[5]) +
             fmt("; unbalanced splits for reference: 4/6 %.4f, 3/7 %.4f, 2/8 %.4f", worst[4], worst[3], worst[2]) +
             fmt(", 1/9 %.4f", worst[1]);
  return c;
}

Criterion archive_discipline() {
  Criterion c{8, true, ""};
  Rng rng(81);
  std::normal_distribution<double> normal;
  AttackerConfig cfg;
  cfg.hidden = 8;
  const int capacity = 6;
  Archive archive(capacity, 0.01, cfg.smoothing);
  std::size_t largest = 0;
  int admitted_checked = 0;
  double closest_admitted = std::numeric_limits<double>::infinity();
  for (int op = 0; op < 1000; ++op) {
    Attacker a(4, 3, cfg, rng);
    const int points = 1 + op % 4;
    for (int i = 0; i < points; ++i) a.buffer().record(Vec::NullaryExpr(4, [&] { return normal(rng); }), 0, 1);
    a.quality = normal(rng);
    archive.update({a}, rng);
    largest = std::max(largest, archive.size());
    if (archive.size() > static_cast<std::size_t>(capacity)) c.passed = false;
    for (const auto& e : archive.entries())
      if (e.threshold_admitted) {
        ++admitted_checked;
        closest_admitted = std::min(closest_admitted, e.insert_min_distance);
        if (e.insert_min_distance < archive.threshold()) c.passed = false;
      }
  }
  c.detail = "1000 updates: largest archive " + std::to_string(largest) + " (n_a = " + std::to_string(capacity) +
             "), " + std::to_string(admitted_checked) + fmt(" admitted-entry checks, smallest insert distance %.4f (>= %.2f)",
                                                             closest_admitted, archive.threshold());
  return c;
}

}  // namespace

std::vector<Criterion> run_oracle_suite() {
  std::vector<Criterion> out;
  for (auto fn : {sprq_consistency, bisimulation, lower_bound, gradients, budget_invariant, monotonicity, wilcoxon,
                  archive_discipline}) {
    out.push_back(fn());
    report(out.back());
  }
  return out;
}

}  // namespace acceptance
