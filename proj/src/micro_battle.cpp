#include "romance/micro_battle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>

#include "romance/error.hpp"

namespace romance {

namespace {

int chebyshev(const Unit& a, const Unit& b) { return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y)); }
int manhattan(int x0, int y0, int x1, int y1) { return std::abs(x0 - x1) + std::abs(y0 - y1); }

constexpr int kDx[4] = {0, 0, -1, 1};  // up, down, left, right
constexpr int kDy[4] = {-1, 1, 0, 0};

bool cell_taken(const BattleState& s, int x, int y) {
  for (const auto& u : s.allies)
    if (u.alive() && u.x == x && u.y == y) return true;
  for (const auto& u : s.enemies)
    if (u.alive() && u.x == x && u.y == y) return true;
  return false;
}

}  // namespace

JointAction scripted_enemy_policy(const BattleState& state, const MicroBattleConfig& cfg) {
  using namespace battle_action;
  JointAction actions(state.enemies.size(), kNoop);
  for (std::size_t e = 0; e < state.enemies.size(); ++e) {
    const Unit& me = state.enemies[e];
    if (!me.alive()) continue;

    int target = -1;
    for (std::size_t a = 0; a < state.allies.size(); ++a) {
      const Unit& ally = state.allies[a];
      if (!ally.alive() || chebyshev(me, ally) > cfg.attack_range) continue;
      if (target < 0 || ally.hp < state.allies[static_cast<std::size_t>(target)].hp) target = static_cast<int>(a);
    }
    if (target >= 0) {
      actions[e] = kAttack0 + target;
      continue;
    }

    int nearest = -1;
    int best = 0;
    for (std::size_t a = 0; a < state.allies.size(); ++a) {
      const Unit& ally = state.allies[a];
      if (!ally.alive()) continue;
      const int d = manhattan(me.x, me.y, ally.x, ally.y);
      if (nearest < 0 || d < best) {
        nearest = static_cast<int>(a);
        best = d;
      }
    }
    if (nearest < 0) {
      actions[e] = kStay;
      continue;
    }
    const Unit& goal = state.allies[static_cast<std::size_t>(nearest)];
    actions[e] = kStay;
    for (int dir = 0; dir < 4; ++dir) {
      const int nx = me.x + kDx[dir];
      const int ny = me.y + kDy[dir];
      if (nx < 0 || ny < 0 || nx >= cfg.grid || ny >= cfg.grid) continue;
      if (manhattan(nx, ny, goal.x, goal.y) >= best) continue;
      if (cell_taken(state, nx, ny)) continue;
      actions[e] = kUp + dir;
      break;
    }
  }
  return actions;
}

MicroBattle::MicroBattle(MicroBattleConfig cfg) : cfg_(cfg) {
  if (cfg_.grid < 2 || cfg_.n_allies < 1 || cfg_.n_enemies < 1 || cfg_.hp < 1 || cfg_.damage < 1 ||
      cfg_.episode_limit < 1)
    throw ConfigError("invalid MicroBattle configuration");
  if (cfg_.n_allies > cfg_.grid || cfg_.n_enemies > cfg_.grid) throw ConfigError("too many units for the grid");
  spec_.name = "micro_battle";
  spec_.n_agents = cfg_.n_allies;
  spec_.n_actions = battle_action::kAttack0 + cfg_.n_enemies;
  spec_.obs_size = 1 + 3 * (cfg_.n_allies - 1 + cfg_.n_enemies);
  spec_.state_size = 3 * (cfg_.n_allies + cfg_.n_enemies) + 1;
  spec_.episode_limit = cfg_.episode_limit;
  const double max_raw = cfg_.n_enemies * (cfg_.hp + cfg_.kill_bonus) + cfg_.win_bonus;
  spec_.reward_scale = max_raw / cfg_.max_return;
  spec_.gamma = 0.99;
}

TimeStep MicroBattle::reset(std::uint64_t seed) {
  auto rows_for = [&](int n, std::mt19937_64& rng) {
    std::vector<int> rows(static_cast<std::size_t>(n));
    if (cfg_.random_spawn) {
      std::vector<int> all(static_cast<std::size_t>(cfg_.grid));
      std::iota(all.begin(), all.end(), 0);
      std::shuffle(all.begin(), all.end(), rng);
      std::copy_n(all.begin(), n, rows.begin());
      std::sort(rows.begin(), rows.end());
    } else {
      const int start = (cfg_.grid - n) / 2;
      std::iota(rows.begin(), rows.end(), start);
    }
    return rows;
  };
  std::mt19937_64 rng(seed);
  state_ = BattleState{};
  const auto ally_rows = rows_for(cfg_.n_allies, rng);
  const auto enemy_rows = rows_for(cfg_.n_enemies, rng);
  for (int r : ally_rows) state_.allies.push_back(Unit{0, r, cfg_.hp});
  for (int r : enemy_rows) state_.enemies.push_back(Unit{cfg_.grid - 1, r, cfg_.hp});
  last_actions_.assign(static_cast<std::size_t>(cfg_.n_allies), battle_action::kStay);
  last_reward_ = 0.0;
  return observe();
}

bool MicroBattle::occupied(int x, int y) const { return cell_taken(state_, x, y); }

Masks MicroBattle::masks() const {
  using namespace battle_action;
  Masks m(state_.allies.size(), ActionMask(static_cast<std::size_t>(spec_.n_actions), 0));
  for (std::size_t i = 0; i < state_.allies.size(); ++i) {
    const Unit& u = state_.allies[i];
    if (!u.alive()) {
      m[i][kNoop] = 1;
      continue;
    }
    m[i][kStay] = 1;
    for (int dir = 0; dir < 4; ++dir) {
      const int nx = u.x + kDx[dir];
      const int ny = u.y + kDy[dir];
      if (in_bounds(nx, ny) && !occupied(nx, ny)) m[i][static_cast<std::size_t>(kUp + dir)] = 1;
    }
    for (std::size_t e = 0; e < state_.enemies.size(); ++e) {
      const Unit& en = state_.enemies[e];
      if (en.alive() && chebyshev(u, en) <= cfg_.attack_range) m[i][kAttack0 + e] = 1;
    }
  }
  return m;
}

Vec MicroBattle::state_features() const {
  Vec s(spec_.state_size);
  const double span = static_cast<double>(cfg_.grid - 1);
  int k = 0;
  auto put = [&](const Unit& u) {
    if (u.alive()) {
      s(k) = u.x / span;
      s(k + 1) = u.y / span;
      s(k + 2) = static_cast<double>(u.hp) / cfg_.hp;
    } else {
      s.segment(k, 3).setZero();
    }
    k += 3;
  };
  for (const auto& u : state_.allies) put(u);
  for (const auto& u : state_.enemies) put(u);
  s(k) = static_cast<double>(state_.t) / cfg_.episode_limit;
  return s;
}

Vec MicroBattle::observation(int ally) const {
  Vec o = Vec::Zero(spec_.obs_size);
  const Unit& me = state_.allies.at(static_cast<std::size_t>(ally));
  if (!me.alive()) return o;
  o(0) = static_cast<double>(me.hp) / cfg_.hp;
  int k = 1;
  auto put = [&](const Unit& u) {
    const double dx = u.x - me.x;
    const double dy = u.y - me.y;
    if (u.alive() && std::sqrt(dx * dx + dy * dy) <= cfg_.sight) {
      o(k) = dx / cfg_.sight;
      o(k + 1) = dy / cfg_.sight;
      o(k + 2) = static_cast<double>(u.hp) / cfg_.hp;
    }
    k += 3;
  };
  for (std::size_t i = 0; i < state_.allies.size(); ++i)
    if (static_cast<int>(i) != ally) put(state_.allies[i]);
  for (const auto& u : state_.enemies) put(u);
  return o;
}

TimeStep MicroBattle::observe() const {
  TimeStep ts;
  ts.state = state_features();
  for (int i = 0; i < cfg_.n_allies; ++i) ts.observations.push_back(observation(i));
  ts.masks = masks();
  return ts;
}

StepResult MicroBattle::step(const JointAction& joint) {
  using namespace battle_action;
  check_available(masks(), joint);
  const bool already_over =
      std::none_of(state_.allies.begin(), state_.allies.end(), [](const Unit& u) { return u.alive(); }) ||
      std::none_of(state_.enemies.begin(), state_.enemies.end(), [](const Unit& u) { return u.alive(); });
  if (already_over || state_.t >= cfg_.episode_limit) throw ContractViolation("step after episode end");

  StepInfo info;
  // Ally attacks resolve first; deaths apply immediately.
  for (std::size_t i = 0; i < joint.size(); ++i) {
    if (joint[i] < kAttack0) continue;
    Unit& target = state_.enemies[static_cast<std::size_t>(joint[i] - kAttack0)];
    if (!target.alive()) continue;
    const int dealt = std::min(cfg_.damage, target.hp);
    target.hp -= dealt;
    info.damage += dealt;
    if (!target.alive()) ++info.kills;
  }
  for (std::size_t i = 0; i < joint.size(); ++i) {
    const int a = joint[i];
    if (a < kUp || a > kRight) continue;
    Unit& u = state_.allies[i];
    const int nx = u.x + kDx[a - kUp];
    const int ny = u.y + kDy[a - kUp];
    if (in_bounds(nx, ny) && !occupied(nx, ny)) {
      u.x = nx;
      u.y = ny;
    }
  }

  const JointAction enemy = scripted_enemy_policy(state_, cfg_);
  for (std::size_t e = 0; e < enemy.size(); ++e) {
    Unit& me = state_.enemies[e];
    if (!me.alive()) continue;
    const int a = enemy[e];
    if (a >= kAttack0) {
      Unit& victim = state_.allies[static_cast<std::size_t>(a - kAttack0)];
      if (victim.alive()) victim.hp -= std::min(cfg_.damage, victim.hp);
    } else if (a >= kUp && a <= kRight) {
      const int nx = me.x + kDx[a - kUp];
      const int ny = me.y + kDy[a - kUp];
      if (in_bounds(nx, ny) && !occupied(nx, ny)) {
        me.x = nx;
        me.y = ny;
      }
    }
  }

  ++state_.t;
  const bool enemies_dead =
      std::none_of(state_.enemies.begin(), state_.enemies.end(), [](const Unit& u) { return u.alive(); });
  const bool allies_dead =
      std::none_of(state_.allies.begin(), state_.allies.end(), [](const Unit& u) { return u.alive(); });
  info.win = enemies_dead;

  double raw = info.damage + cfg_.kill_bonus * info.kills;
  if (info.win) raw += cfg_.win_bonus;

  StepResult out;
  static_cast<TimeStep&>(out) = observe();
  out.reward = raw / spec_.reward_scale;
  out.done = enemies_dead || allies_dead || state_.t >= cfg_.episode_limit;
  info.truncated = out.done && !enemies_dead && !allies_dead;
  out.info = info;
  last_actions_ = joint;
  last_reward_ = out.reward;
  return out;
}

nlohmann::json MicroBattle::trace_record() const {
  auto units = [](const std::vector<Unit>& us) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& u : us) arr.push_back({{"x", u.x}, {"y", u.y}, {"hp", u.hp}});
    return arr;
  };
  return {{"t", state_.t},
          {"allies", units(state_.allies)},
          {"enemies", units(state_.enemies)},
          {"last_actions", last_actions_},
          {"last_reward", last_reward_}};
}

}  // namespace romance
