#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <vector>

#include "romance/autodiff.hpp"
#include "romance/mlp.hpp"
#include "romance/optim.hpp"
#include "romance/policy.hpp"

namespace romance {

struct AttackerConfig {
  int hidden = 64;
  double lr = 5e-4;
  double gamma = 0.99;
  double lambda = 0.04;
  double delta = 0.05;
  /// Smoothing mixed into distributions entering divergence terms only.
  double smoothing = 0.02;
  int buffer_capacity = 256;
  int replay_capacity = 5000;
  int batch_size = 64;
  int target_interval = 200;
  /// Attack points drawn per diversity evaluation.
  int diversity_sample = 64;
  double grad_clip = 10.0;
};

/// FIFO of attacker views at which a victim was named with budget left.
class AttackPointBuffer {
 public:
  explicit AttackPointBuffer(std::size_t capacity = 256);
  /// Records `view` only when a victim was chosen and k > 0; returns
  /// whether it was stored.
  bool record(const Vec& view, std::optional<int> victim, int remaining);
  std::size_t size() const { return points_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<Vec>& points() const { return points_; }
  std::uint64_t digest() const;
  nlohmann::json to_json() const;
  static AttackPointBuffer from_json(const nlohmann::json& j);

 private:
  std::size_t capacity_;
  std::deque<Vec> points_;
};

/// Attacker-view transitions, rows aligned.
struct AttackerBatch {
  Mat obs;
  std::vector<int> actions;
  Vec rewards;
  Mat next_obs;
  Vec not_done;

  int size() const { return static_cast<int>(rewards.size()); }
};

struct AttackerTransition {
  Vec obs;
  int action = 0;
  double reward = 0.0;
  Vec next_obs;
  bool done = false;
};

AttackerBatch make_attacker_batch(const std::vector<const AttackerTransition*>& transitions);

MlpShape attacker_shape(int view_size, int n_agents, int hidden);

/// v(a|s) = p(a) exp(Q(s, a) / lambda) / Z(s) for a single view.
Vec victim_policy(const ParamSet& phi, const MlpShape& shape, const Vec& view, double lambda, const Vec& prior);
/// Row-wise victim policies for a batch of views (B x (n+1)), recorded in `g`.
ad::Var victim_policy(ad::Graph& g, const ParamSet& phi, const MlpShape& shape, const Mat& views, double lambda,
                      const Vec& prior);

/// y = r + gamma lambda log sum_a p(a) exp(Q_target(s', a) / lambda); y = r
/// at terminal transitions.
Vec sprq_target(const ParamSet& phi_target, const MlpShape& shape, const AttackerBatch& batch, double lambda,
                double gamma, const Vec& prior);
/// Mean (Q_phi(s, a) - y)^2 with y held constant.
ad::Var sprq_loss(ad::Graph& g, const ParamSet& phi, const MlpShape& shape, const AttackerBatch& batch, const Vec& y);

/// Mean KL of each smoothed distribution to their average.
double jsd(const std::vector<Vec>& distributions, double smoothing);
/// Per-row JSD across members (each B x m), B x 1.
ad::Var jsd_rows(const std::vector<ad::Var>& distributions, double smoothing);

/// Mean JSD of the members' policies over the given attack points (rows).
/// Zero for an empty point set or a single member.
ad::Var diversity_loss(ad::Graph& g, const std::vector<const ParamSet*>& phis, const MlpShape& shape,
                       const Mat& points, double lambda, const Vec& prior, double smoothing);

/// Instrumentation for the loss actually built.
struct LossTrace {
  bool used_population_loss = false;
  bool evaluated_diversity = false;
};

/// (1/n_p) sum_j L_opt(phi_j) - alpha L_div.
ad::Var population_loss(ad::Graph& g, const std::vector<const ParamSet*>& phis, const MlpShape& shape,
                        const std::vector<AttackerBatch>& batches, const std::vector<Vec>& targets,
                        const Mat& points, double alpha, double lambda, const Vec& prior, double smoothing,
                        LossTrace* trace = nullptr);

/// Rows drawn uniformly without replacement from the union of buffers.
Mat sample_attack_points(const std::vector<const AttackPointBuffer*>& buffers, int count, Rng& rng);

/// One victim-selection attacker: Q-network, target copy, attack-point
/// buffer, its own transition replay and archive metadata.
class Attacker {
 public:
  Attacker(int view_size, int n_agents, const AttackerConfig& cfg, Rng& rng);

  int n_agents() const { return n_agents_; }
  int view_size() const { return view_size_; }
  const AttackerConfig& config() const { return cfg_; }
  const MlpShape& shape() const { return shape_; }
  const ParamSet& online() const { return online_; }
  ParamSet& mutable_online() { return online_; }
  const ParamSet& target() const { return target_; }
  const Vec& prior() const { return prior_; }
  AttackPointBuffer& buffer() { return buffer_; }
  const AttackPointBuffer& buffer() const { return buffer_; }

  Vec policy(const Vec& view) const;
  /// Categorical draw from the victim policy; null when none is named.
  /// Records the view in the attack-point buffer when `record` is set.
  std::optional<int> sample(const Vec& view, int remaining, Rng& rng, bool record);

  void remember(AttackerTransition t);
  std::size_t replay_size() const { return replay_.size(); }
  AttackerBatch sample_batch(Rng& rng) const;
  /// Bookkeeping after an optimizer step driven from outside.
  void after_update();
  void sync_target();
  long updates() const { return updates_; }
  RmsProp& optimizer() { return opt_; }

  double quality = 0.0;
  long timestamp = 0;

  nlohmann::json to_json() const;
  static Attacker from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Attacker load(const std::filesystem::path& path);
  std::uint64_t digest() const { return online_.digest(); }

 private:
  Attacker() = default;

  int view_size_ = 0;
  int n_agents_ = 0;
  AttackerConfig cfg_;
  MlpShape shape_;
  Vec prior_;
  ParamSet online_;
  ParamSet target_;
  RmsProp opt_;
  AttackPointBuffer buffer_;
  std::deque<AttackerTransition> replay_;
  long updates_ = 0;
  int since_sync_ = 0;
};

/// One optimizer step for every member, either from the shared population
/// loss or from each member's own SPRQ loss. Returns the loss value.
double update_population(std::vector<Attacker*>& members, double alpha, bool use_diversity, Rng& rng,
                         LossTrace* trace = nullptr);

/// VictimSelector view over an Attacker.
class AttackerSelector final : public VictimSelector {
 public:
  AttackerSelector(Attacker& attacker, bool record) : attacker_(&attacker), record_(record) {}
  std::optional<int> select(const AttackContext& ctx, Rng& rng) override;

 private:
  Attacker* attacker_;
  bool record_;
};

}  // namespace romance
