#pragma once

#include "romance/env.hpp"
#include "romance/tabular_mdp.hpp"

namespace romance {

/// Corridor coordination game: agents move left/stay/right and the team is
/// paid once, when every agent stands on the last cell at the same time.
struct ChainCoopConfig {
  int cells = 5;
  int n_agents = 2;
  int episode_limit = 12;
  double gamma = 0.95;
  double goal_reward = 1.0;
};

namespace chain_action {
inline constexpr int kLeft = 0;
inline constexpr int kStay = 1;
inline constexpr int kRight = 2;
}  // namespace chain_action

class ChainCoop final : public TabularEnvironment {
 public:
  static constexpr int kMaxTabularStates = 10000;

  explicit ChainCoop(ChainCoopConfig cfg = {});

  const EnvSpec& spec() const override { return spec_; }
  TimeStep reset(std::uint64_t seed) override;
  StepResult step(const JointAction& joint) override;
  TimeStep observe() const override;
  int t() const override { return t_; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<ChainCoop>(*this); }
  nlohmann::json trace_record() const override;
  std::optional<int> tabular_state() const override;

  /// Position states (cells^agents) plus one absorbing terminal state.
  /// Throws ConfigError when that exceeds kMaxTabularStates.
  TabularMDP enumerate_tabular() const override;
  int tabular_state_count() const override;
  Masks masks_at(int state) const override;
  std::vector<Vec> observations_at(int state) const override;
  Vec state_features_at(int state) const override;

  int terminal_state() const { return position_state_count(); }
  const std::vector<int>& positions() const { return positions_; }
  void set_positions(std::vector<int> p) { positions_ = std::move(p); }
  const ChainCoopConfig& config() const { return cfg_; }

 private:
  int position_state_count() const;
  int encode_positions(const std::vector<int>& pos) const;
  std::vector<int> decode_positions(int state) const;
  Vec features_of(const std::vector<int>& pos) const;
  bool at_goal(const std::vector<int>& pos) const;
  std::vector<int> move(const std::vector<int>& pos, const JointAction& joint) const;

  ChainCoopConfig cfg_;
  EnvSpec spec_;
  std::vector<int> positions_;
  int t_ = 0;
  bool finished_ = false;
};

}  // namespace romance
