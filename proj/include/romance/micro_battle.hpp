#pragma once

#include <vector>

#include "romance/env.hpp"

namespace romance {

/// Grid combat between learned allies and scripted enemies. Rewards mirror
/// the usual StarCraft micromanagement shaping: damage dealt, a bonus per
/// kill and a bonus for winning, normalized so the best episode returns
/// `max_return`.
struct MicroBattleConfig {
  int grid = 8;
  int n_allies = 3;
  int n_enemies = 3;
  int hp = 10;
  int damage = 2;
  int attack_range = 1;  // Chebyshev
  double sight = 3.0;    // Euclidean
  int episode_limit = 50;
  double kill_bonus = 10.0;
  double win_bonus = 200.0;
  double max_return = 20.0;
  /// Shuffle spawn rows per seed instead of the fixed centred layout.
  bool random_spawn = false;
};

struct Unit {
  int x = 0;
  int y = 0;
  int hp = 0;
  bool alive() const { return hp > 0; }
};

struct BattleState {
  std::vector<Unit> allies;
  std::vector<Unit> enemies;
  int t = 0;
};

namespace battle_action {
inline constexpr int kNoop = 0;
inline constexpr int kStay = 1;
inline constexpr int kUp = 2;  // y - 1
inline constexpr int kDown = 3;
inline constexpr int kLeft = 4;  // x - 1
inline constexpr int kRight = 5;
inline constexpr int kAttack0 = 6;
}  // namespace battle_action

/// Enemy decisions for the current state, in the ally action encoding
/// (attack-j targets ally j). Living enemies attack the lowest-HP ally in
/// range (lower index on ties); otherwise step toward the nearest ally by
/// Manhattan distance (lower index on ties), trying up, down, left, right in
/// that order and taking the first free cell that reduces the distance.
JointAction scripted_enemy_policy(const BattleState& state, const MicroBattleConfig& cfg);

class MicroBattle final : public Environment {
 public:
  explicit MicroBattle(MicroBattleConfig cfg = {});

  const EnvSpec& spec() const override { return spec_; }
  TimeStep reset(std::uint64_t seed) override;
  StepResult step(const JointAction& joint) override;
  TimeStep observe() const override;
  int t() const override { return state_.t; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<MicroBattle>(*this); }
  nlohmann::json trace_record() const override;

  const BattleState& state() const { return state_; }
  /// Replaces the battle state (tests and scripted scenarios).
  void set_state(BattleState s) { state_ = std::move(s); }
  const MicroBattleConfig& config() const { return cfg_; }

  Masks masks() const;
  Vec state_features() const;
  Vec observation(int ally) const;

 private:
  bool occupied(int x, int y) const;
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < cfg_.grid && y < cfg_.grid; }

  MicroBattleConfig cfg_;
  EnvSpec spec_;
  BattleState state_;
  JointAction last_actions_;
  double last_reward_ = 0.0;
};

}  // namespace romance
