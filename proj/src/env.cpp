#include "romance/env.hpp"

#include "romance/error.hpp"

namespace romance {

int TabularEnvironment::encode_joint(const JointAction& joint) const {
  const auto& s = spec();
  if (static_cast<int>(joint.size()) != s.n_agents) throw ContractViolation("joint action has wrong arity");
  int index = 0;
  int radix = 1;
  for (int a : joint) {
    if (a < 0 || a >= s.n_actions) throw ContractViolation("action index out of range");
    index += a * radix;
    radix *= s.n_actions;
  }
  return index;
}

JointAction TabularEnvironment::decode_joint(int index) const {
  const auto& s = spec();
  JointAction joint(static_cast<std::size_t>(s.n_agents));
  for (int i = 0; i < s.n_agents; ++i) {
    joint[static_cast<std::size_t>(i)] = index % s.n_actions;
    index /= s.n_actions;
  }
  return joint;
}

int TabularEnvironment::joint_action_count() const {
  int n = 1;
  for (int i = 0; i < spec().n_agents; ++i) n *= spec().n_actions;
  return n;
}

void check_available(const Masks& masks, const JointAction& joint) {
  if (joint.size() != masks.size()) throw ContractViolation("joint action has wrong arity");
  for (std::size_t i = 0; i < joint.size(); ++i) {
    const int a = joint[i];
    if (a < 0 || a >= static_cast<int>(masks[i].size()) || !masks[i][static_cast<std::size_t>(a)])
      throw ContractViolation("agent " + std::to_string(i) + " chose unavailable action " + std::to_string(a));
  }
}

History::History(int n_agents, int window, int obs_size, int n_actions)
    : n_agents_(n_agents), window_(window), obs_size_(obs_size), n_actions_(n_actions),
      frames_(static_cast<std::size_t>(n_agents)) {
  if (window < 1) throw ConfigError("history window must be >= 1");
}

void History::reset(const std::vector<Vec>& observations) {
  for (int i = 0; i < n_agents_; ++i) {
    auto& ring = frames_[static_cast<std::size_t>(i)];
    ring.clear();
    Vec frame = Vec::Zero(obs_size_ + n_actions_);
    frame.head(obs_size_) = observations[static_cast<std::size_t>(i)];
    ring.push_back(std::move(frame));
  }
}

void History::push(const std::vector<Vec>& observations, const JointAction& actions) {
  for (int i = 0; i < n_agents_; ++i) {
    auto& ring = frames_[static_cast<std::size_t>(i)];
    Vec frame = Vec::Zero(obs_size_ + n_actions_);
    frame.head(obs_size_) = observations[static_cast<std::size_t>(i)];
    frame(obs_size_ + actions[static_cast<std::size_t>(i)]) = 1.0;
    ring.push_back(std::move(frame));
    if (static_cast<int>(ring.size()) > window_) ring.erase(ring.begin());
  }
}

Vec History::features(int agent) const {
  const auto& ring = frames_.at(static_cast<std::size_t>(agent));
  const int frame_size = obs_size_ + n_actions_;
  Vec out = Vec::Zero(feature_size());
  const int pad = window_ - static_cast<int>(ring.size());
  for (std::size_t k = 0; k < ring.size(); ++k)
    out.segment((pad + static_cast<int>(k)) * frame_size, frame_size) = ring[k];
  return out;
}

Mat History::feature_matrix() const {
  Mat out(n_agents_, feature_size());
  for (int i = 0; i < n_agents_; ++i) out.row(i) = features(i).transpose();
  return out;
}

Vec history_features(const std::vector<std::vector<Vec>>& observations, const std::vector<JointAction>& actions,
                     int t, int agent, int window, int n_actions) {
  const auto a = static_cast<std::size_t>(agent);
  const int obs_size = static_cast<int>(observations.at(0).at(a).size());
  const int frame_size = obs_size + n_actions;
  Vec out = Vec::Zero(window * frame_size);
  for (int k = 0; k < window; ++k) {
    const int tau = t - (window - 1 - k);
    if (tau < 0) continue;
    out.segment(k * frame_size, obs_size) = observations[static_cast<std::size_t>(tau)][a];
    if (tau > 0) out(k * frame_size + obs_size + actions[static_cast<std::size_t>(tau - 1)][a]) = 1.0;
  }
  return out;
}

}  // namespace romance
