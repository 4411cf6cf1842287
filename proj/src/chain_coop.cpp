#include "romance/chain_coop.hpp"

#include <algorithm>

#include "romance/error.hpp"

namespace romance {

ChainCoop::ChainCoop(ChainCoopConfig cfg) : cfg_(cfg) {
  if (cfg_.cells < 2 || cfg_.n_agents < 1 || cfg_.episode_limit < 1) throw ConfigError("invalid ChainCoop configuration");
  spec_.name = "chain_coop";
  spec_.n_agents = cfg_.n_agents;
  spec_.n_actions = 3;
  spec_.obs_size = cfg_.cells * cfg_.n_agents;
  spec_.state_size = cfg_.cells * cfg_.n_agents;
  spec_.episode_limit = cfg_.episode_limit;
  spec_.reward_scale = 1.0;
  spec_.gamma = cfg_.gamma;
  positions_.assign(static_cast<std::size_t>(cfg_.n_agents), 0);
}

int ChainCoop::position_state_count() const {
  long long n = 1;
  for (int i = 0; i < cfg_.n_agents; ++i) {
    n *= cfg_.cells;
    if (n + 1 > kMaxTabularStates) return -1;
  }
  return static_cast<int>(n);
}

int ChainCoop::tabular_state_count() const {
  const int n = position_state_count();
  if (n < 0) throw ConfigError("ChainCoop state space exceeds " + std::to_string(kMaxTabularStates) + " states");
  return n + 1;
}

int ChainCoop::encode_positions(const std::vector<int>& pos) const {
  int index = 0;
  int radix = 1;
  for (int p : pos) {
    index += p * radix;
    radix *= cfg_.cells;
  }
  return index;
}

std::vector<int> ChainCoop::decode_positions(int state) const {
  std::vector<int> pos(static_cast<std::size_t>(cfg_.n_agents));
  for (auto& p : pos) {
    p = state % cfg_.cells;
    state /= cfg_.cells;
  }
  return pos;
}

Vec ChainCoop::features_of(const std::vector<int>& pos) const {
  Vec f = Vec::Zero(spec_.state_size);
  for (std::size_t i = 0; i < pos.size(); ++i) f(static_cast<Eigen::Index>(i) * cfg_.cells + pos[i]) = 1.0;
  return f;
}

bool ChainCoop::at_goal(const std::vector<int>& pos) const {
  return std::all_of(pos.begin(), pos.end(), [&](int p) { return p == cfg_.cells - 1; });
}

std::vector<int> ChainCoop::move(const std::vector<int>& pos, const JointAction& joint) const {
  std::vector<int> next = pos;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    if (joint[i] == chain_action::kLeft) next[i] = std::max(0, pos[i] - 1);
    else if (joint[i] == chain_action::kRight) next[i] = std::min(cfg_.cells - 1, pos[i] + 1);
  }
  return next;
}

TimeStep ChainCoop::reset(std::uint64_t /*seed*/) {
  positions_.assign(static_cast<std::size_t>(cfg_.n_agents), 0);
  t_ = 0;
  finished_ = false;
  return observe();
}

TimeStep ChainCoop::observe() const {
  TimeStep ts;
  ts.state = features_of(positions_);
  ts.observations.assign(static_cast<std::size_t>(cfg_.n_agents), ts.state);
  ts.masks.assign(static_cast<std::size_t>(cfg_.n_agents), ActionMask(3, 1));
  return ts;
}

StepResult ChainCoop::step(const JointAction& joint) {
  check_available(observe().masks, joint);
  if (finished_ || t_ >= cfg_.episode_limit) throw ContractViolation("step after episode end");
  positions_ = move(positions_, joint);
  ++t_;
  StepResult out;
  const bool goal = at_goal(positions_);
  static_cast<TimeStep&>(out) = observe();
  out.reward = goal ? cfg_.goal_reward : 0.0;
  out.done = goal || t_ >= cfg_.episode_limit;
  out.info.win = goal;
  out.info.truncated = out.done && !goal;
  finished_ = out.done;
  return out;
}

std::optional<int> ChainCoop::tabular_state() const {
  if (finished_ && at_goal(positions_)) return terminal_state();
  return encode_positions(positions_);
}

TabularMDP ChainCoop::enumerate_tabular() const {
  const int n_states = tabular_state_count();
  const int terminal = n_states - 1;
  const int n_joint = joint_action_count();
  TabularMDP mdp(n_states, n_joint, cfg_.gamma);
  for (int s = 0; s < terminal; ++s) {
    const auto pos = decode_positions(s);
    const bool dead_end = at_goal(pos);  // never occupied: reaching it terminates
    for (int a = 0; a < n_joint; ++a) {
      if (dead_end) {
        mdp.p(s, a, terminal) = 1.0;
        continue;
      }
      const auto next = move(pos, decode_joint(a));
      const int s2 = at_goal(next) ? terminal : encode_positions(next);
      mdp.p(s, a, s2) = 1.0;
    }
    // The team reward depends only on arriving at the goal.
    if (!dead_end)
      for (int a = 0; a < n_joint; ++a) mdp.r(s, a, terminal) = cfg_.goal_reward;
  }
  for (int a = 0; a < n_joint; ++a) mdp.p(terminal, a, terminal) = 1.0;
  mdp.set_terminal(terminal, true);
  mdp.initial()[static_cast<std::size_t>(encode_positions(std::vector<int>(static_cast<std::size_t>(cfg_.n_agents), 0)))] = 1.0;
  return mdp;
}

Masks ChainCoop::masks_at(int /*state*/) const {
  return Masks(static_cast<std::size_t>(cfg_.n_agents), ActionMask(3, 1));
}

std::vector<Vec> ChainCoop::observations_at(int state) const {
  const Vec f = state_features_at(state);
  return std::vector<Vec>(static_cast<std::size_t>(cfg_.n_agents), f);
}

Vec ChainCoop::state_features_at(int state) const {
  if (state == terminal_state()) return features_of(std::vector<int>(static_cast<std::size_t>(cfg_.n_agents), cfg_.cells - 1));
  return features_of(decode_positions(state));
}

nlohmann::json ChainCoop::trace_record() const { return {{"t", t_}, {"positions", positions_}}; }

}  // namespace romance
