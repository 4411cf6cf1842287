#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "romance/autodiff.hpp"
#include "romance/env.hpp"
#include "romance/mlp.hpp"
#include "romance/optim.hpp"
#include "romance/policy.hpp"

namespace romance {

enum class MixerKind { kVdn, kQmix };
MixerKind parse_mixer(const std::string& name);
std::string to_string(MixerKind kind);

struct EgoConfig {
  MixerKind mixer = MixerKind::kQmix;
  int window = 4;
  int hidden = 64;
  int embed = 32;
  Activation activation = Activation::kRelu;
  double lr = 4e-4;
  double gamma = 0.99;
  int target_interval = 200;
  /// Global gradient-norm clip for ego updates; <= 0 disables.
  double grad_clip = 10.0;
};

/// Sizes the ego networks need from an environment.
struct EgoDims {
  int n_agents = 0;
  int n_actions = 0;
  int obs_size = 0;
  int state_size = 0;
  int window = 4;

  static EgoDims from(const EnvSpec& spec, int window);
  int history_size() const { return window * (obs_size + n_actions); }
  int input_size() const { return history_size() + n_agents; }
};

/// Online or target copy of the ego: one shared utility network and the
/// mixer parameters (empty for VDN).
struct EgoNets {
  ParamSet agent;
  ParamSet mixer;
};

MlpShape agent_shape(const EgoDims& dims, const EgoConfig& cfg);
EgoNets make_ego_nets(const EgoDims& dims, const EgoConfig& cfg, Rng& rng);

/// Appends the agent one-hot to each row of an n_agents x history matrix.
Mat agent_inputs(const Mat& histories, int n_agents);

/// Per-agent utilities, n_agents x n_actions.
Mat agent_utilities(const EgoNets& nets, const MlpShape& shape, const Mat& histories);

/// Q_tot from chosen-action utilities (B x n) and states (B x S). VDN sums;
/// QMIX mixes through state-conditioned nonnegative weights:
///   h = relu(q |W1(s)| + b1(s)),  Q_tot = h |w2(s)| + V(s).
ad::Var mix(ad::Graph& g, const EgoNets& nets, MixerKind kind, ad::Var agent_qs, ad::Var states, int embed);
Mat mix_eval(const EgoNets& nets, MixerKind kind, const Mat& agent_qs, const Mat& states, int embed);

/// One stored episode. Index t runs over decision points 0..length; the
/// actions are the chosen (not executed) ones.
struct Episode {
  std::vector<std::vector<Vec>> observations;  // length + 1
  std::vector<Vec> states;                     // length + 1
  std::vector<Masks> masks;                    // length + 1
  std::vector<JointAction> actions;            // length
  std::vector<double> rewards;                 // length
  /// Ended in a true terminal state (not by the step cap).
  bool terminal = false;

  int length() const { return static_cast<int>(actions.size()); }
};

/// Flattened transitions; agent rows are ordered transition-major
/// (row = b * n_agents + i).
struct EgoBatch {
  Mat inputs;
  Mat next_inputs;
  Mat states;
  Mat next_states;
  std::vector<int> actions;
  Masks next_masks;
  Vec rewards;
  Vec not_done;

  int size() const { return static_cast<int>(rewards.size()); }
};

EgoBatch make_ego_batch(const std::vector<const Episode*>& episodes, const EgoDims& dims);

/// Mean squared TD error against r + gamma * mix_target(argmax_a' Q_target).
ad::Var td_loss(ad::Graph& g, const EgoNets& online, const EgoNets& target, const EgoBatch& batch,
                const EgoDims& dims, const EgoConfig& cfg);

/// Linear decay from `start` to `end` over the first `fraction` of episodes.
double epsilon_at(long episode, long total_episodes, double start = 1.0, double end = 0.05, double fraction = 0.1);

/// FIFO of whole episodes with uniform sampling.
class EpisodeReplay {
 public:
  explicit EpisodeReplay(std::size_t capacity);
  void add(Episode episode);
  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::vector<const Episode*> sample(std::size_t count, Rng& rng) const;
  const Episode& at(std::size_t i) const { return episodes_.at(i); }

 private:
  std::size_t capacity_;
  std::deque<Episode> episodes_;
};

/// Online and target ego networks with their optimizer.
class EgoLearner {
 public:
  EgoLearner(const EgoDims& dims, const EgoConfig& cfg, Rng& rng);

  const EgoDims& dims() const { return dims_; }
  const EgoConfig& config() const { return cfg_; }
  const EgoNets& online() const { return online_; }
  const EgoNets& target() const { return target_; }
  EgoNets& mutable_online() { return online_; }
  const MlpShape& shape() const { return shape_; }

  /// One gradient step on the TD loss; returns the loss before the step.
  double update(const EgoBatch& batch);
  void sync_target();
  long updates() const { return updates_; }
  int updates_since_sync() const { return since_sync_; }

  std::uint64_t digest() const;
  nlohmann::json to_json() const;
  static EgoLearner from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static EgoLearner load(const std::filesystem::path& path);

 private:
  EgoLearner() = default;

  EgoDims dims_;
  EgoConfig cfg_;
  MlpShape shape_;
  EgoNets online_;
  EgoNets target_;
  RmsProp agent_opt_;
  RmsProp mixer_opt_;
  long updates_ = 0;
  int since_sync_ = 0;
};

/// Acts from an ego's online utility network.
class NeuralEgo final : public EgoPolicy {
 public:
  NeuralEgo(const EgoNets& nets, const MlpShape& shape, int n_agents)
      : nets_(&nets), shape_(shape), n_agents_(n_agents) {}
  EgoDecision act(const DecisionContext& ctx, double epsilon, Rng& rng) const override;

 private:
  const EgoNets* nets_;
  MlpShape shape_;
  int n_agents_;
};

}  // namespace romance
