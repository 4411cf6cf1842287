#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "romance/param_set.hpp"

namespace romance {

using JointAction = std::vector<int>;
/// Per-agent availability flags, 1 = available.
using ActionMask = std::vector<std::uint8_t>;
using Masks = std::vector<ActionMask>;

struct EnvSpec {
  std::string name;
  int n_agents = 0;
  int n_actions = 0;
  int obs_size = 0;
  int state_size = 0;
  int episode_limit = 1;
  double reward_scale = 1.0;
  /// Discount the environment was designed around.
  double gamma = 0.99;
};

struct StepInfo {
  int kills = 0;
  double damage = 0.0;
  bool win = false;
  /// Episode ended by the step cap rather than by a terminal event.
  bool truncated = false;
};

/// What every agent sees at a decision point.
struct TimeStep {
  Vec state;
  std::vector<Vec> observations;
  Masks masks;
};

struct StepResult : TimeStep {
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

class TabularMDP;

/// Cooperative Dec-POMDP with a shared team reward.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual TimeStep reset(std::uint64_t seed) = 0;
  /// Throws ContractViolation if any action is unavailable under the
  /// current masks.
  virtual StepResult step(const JointAction& joint) = 0;
  virtual TimeStep observe() const = 0;
  virtual int t() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  /// One JSON object describing the current tick, for trace export.
  virtual nlohmann::json trace_record() const = 0;

  /// Index of the current state when the environment is finite.
  virtual std::optional<int> tabular_state() const { return std::nullopt; }
};

/// Finite environment that can be written out as an explicit MDP over
/// joint actions. Joint index = sum_i a_i * n_actions^i.
class TabularEnvironment : public Environment {
 public:
  virtual TabularMDP enumerate_tabular() const = 0;
  virtual int tabular_state_count() const = 0;
  virtual Masks masks_at(int state) const = 0;
  /// Observations the agents receive in the given tabular state.
  virtual std::vector<Vec> observations_at(int state) const = 0;
  virtual Vec state_features_at(int state) const = 0;

  int encode_joint(const JointAction& joint) const;
  JointAction decode_joint(int index) const;
  int joint_action_count() const;
};

void check_available(const Masks& masks, const JointAction& joint);

/// Per-agent window of the last H (observation, one-hot previous action)
/// pairs, oldest first, zero-padded before the episode start.
class History {
 public:
  History(int n_agents, int window, int obs_size, int n_actions);

  /// Starts an episode with the initial observations.
  void reset(const std::vector<Vec>& observations);
  /// Appends the observations that followed `actions`.
  void push(const std::vector<Vec>& observations, const JointAction& actions);

  int feature_size() const { return window_ * (obs_size_ + n_actions_); }
  int window() const { return window_; }
  Vec features(int agent) const;
  /// n_agents x feature_size
  Mat feature_matrix() const;

 private:
  int n_agents_;
  int window_;
  int obs_size_;
  int n_actions_;
  // Per agent: ring of frames, newest at back.
  std::vector<std::vector<Vec>> frames_;
};

/// Window features for agent `agent` at step t, rebuilt from a stored
/// episode. `observations[t][agent]`, `actions[t][agent]` (action taken at
/// t). Matches History exactly.
Vec history_features(const std::vector<std::vector<Vec>>& observations, const std::vector<JointAction>& actions,
                     int t, int agent, int window, int n_actions);

}  // namespace romance
