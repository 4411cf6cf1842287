#include "romance/rollout.hpp"

#include <algorithm>

#include "romance/error.hpp"

namespace romance {

DualTrajectory collect_traj(const EgoPolicy& ego, VictimSelector& attacker, LpaEnv& env, std::uint64_t env_seed,
                            const RolloutOptions& opts, Rng& ego_rng, Rng& attacker_rng) {
  const EnvSpec& spec = env.env().spec();
  const int n = spec.n_agents;
  DualTrajectory traj;
  TimeStep ts = env.reset(env_seed);
  History history(n, opts.window, spec.obs_size, spec.n_actions);
  history.reset(ts.observations);
  traj.ego.observations.push_back(ts.observations);
  traj.ego.states.push_back(ts.state);
  traj.ego.masks.push_back(ts.masks);

  double discount = 1.0;
  bool done = false;
  while (!done) {
    const Mat hist = history.feature_matrix();
    DecisionContext ctx;
    ctx.histories = &hist;
    ctx.masks = &ts.masks;
    ctx.tabular_state = env.env().tabular_state();
    const EgoDecision decision = ego.act(ctx, opts.epsilon, ego_rng);

    const Vec view = env.attacker_view();
    AttackContext actx;
    actx.observation = &view;
    actx.tabular_state = ctx.tabular_state;
    actx.remaining = env.budget().remaining();
    actx.capacity = env.budget().capacity();
    const std::optional<int> victim = attacker.select(actx, attacker_rng);

    const LpaStepRecord rec = env.step(decision.actions, victim, decision.q);
    const StepResult& r = rec.result;
    done = r.done;
    const bool terminal = r.done && !r.info.truncated;

    traj.ego.actions.push_back(decision.actions);
    traj.ego.rewards.push_back(r.reward);
    traj.ego.observations.push_back(r.observations);
    traj.ego.states.push_back(r.state);
    traj.ego.masks.push_back(r.masks);
    traj.ego.terminal = terminal;

    AttackerTransition t;
    t.obs = view;
    t.action = victim ? *victim : n;
    t.reward = -r.reward;
    t.next_obs = env.attacker_view();
    t.done = terminal;
    traj.attacker.push_back(std::move(t));

    traj.executed.push_back(rec.executed);
    traj.victims.push_back(victim);
    traj.team_return += r.reward;
    traj.attacker_discounted_return += discount * -r.reward;
    discount *= opts.gamma;
    if (r.info.win) traj.win = true;

    history.push(r.observations, decision.actions);
    ts = r;
  }
  traj.attacks_spent = env.attacks_spent();
  traj.actions_changed = env.actions_changed();
  return traj;
}

double quality(const EgoPolicy& ego, VictimSelector& attacker, const LpaEnv& env, int episodes, double gamma,
               int window, std::uint64_t seed) {
  if (episodes < 1) throw UsageError("quality needs at least one episode");
  LpaEnv local(env);
  Rng ego_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Rng attacker_rng(seed);
  RolloutOptions opts;
  opts.gamma = gamma;
  opts.window = window;
  double total = 0.0;
  for (int e = 0; e < episodes; ++e)
    total += collect_traj(ego, attacker, local, seed + static_cast<std::uint64_t>(e), opts, ego_rng, attacker_rng)
                 .attacker_discounted_return;
  return total / episodes;
}

RolloutSummary run_episodes(const EgoPolicy& ego, VictimSelector& attacker, const LpaEnv& env, int episodes,
                            int window, std::uint64_t seed) {
  if (episodes < 1) throw UsageError("evaluation needs at least one episode");
  LpaEnv local(env);
  Rng ego_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Rng attacker_rng(seed);
  RolloutOptions opts;
  opts.window = window;
  RolloutSummary s;
  s.episodes = episodes;
  for (int e = 0; e < episodes; ++e) {
    const DualTrajectory t =
        collect_traj(ego, attacker, local, seed + static_cast<std::uint64_t>(e), opts, ego_rng, attacker_rng);
    s.returns.push_back(t.team_return);
    s.wins.push_back(t.win ? 1 : 0);
    s.attacks.push_back(t.attacks_spent);
    s.max_attacks = std::max(s.max_attacks, t.attacks_spent);
    s.mean_return += t.team_return;
    s.win_rate += t.win ? 1.0 : 0.0;
  }
  s.mean_return /= episodes;
  s.win_rate /= episodes;
  return s;
}

}  // namespace romance
