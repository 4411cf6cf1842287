#pragma once

#include <cstddef>
#include <vector>

namespace romance {

/// Explicit finite MDP. Dense P[s][a][s'] and R[s][a][s'] stored flat.
/// Terminal states are absorbing and have value zero.
class TabularMDP {
 public:
  TabularMDP() = default;
  TabularMDP(int states, int actions, double gamma);

  int states() const { return states_; }
  int actions() const { return actions_; }
  double gamma() const { return gamma_; }
  void set_gamma(double gamma) { gamma_ = gamma; }

  double& p(int s, int a, int s2) { return p_[index(s, a, s2)]; }
  double p(int s, int a, int s2) const { return p_[index(s, a, s2)]; }
  double& r(int s, int a, int s2) { return r_[index(s, a, s2)]; }
  double r(int s, int a, int s2) const { return r_[index(s, a, s2)]; }

  bool terminal(int s) const { return terminal_[static_cast<std::size_t>(s)] != 0; }
  void set_terminal(int s, bool t) { terminal_[static_cast<std::size_t>(s)] = t ? 1 : 0; }

  const std::vector<double>& initial() const { return initial_; }
  std::vector<double>& initial() { return initial_; }

  /// Expected immediate reward sum_s' P R.
  double expected_reward(int s, int a) const;

  /// Throws ConfigError unless every row sums to 1 within tol, rewards are
  /// finite and the initial distribution sums to 1.
  void validate(double tol = 1e-12) const;

 private:
  std::size_t index(int s, int a, int s2) const {
    return (static_cast<std::size_t>(s) * static_cast<std::size_t>(actions_) + static_cast<std::size_t>(a)) *
               static_cast<std::size_t>(states_) +
           static_cast<std::size_t>(s2);
  }

  int states_ = 0;
  int actions_ = 0;
  double gamma_ = 0.99;
  std::vector<double> p_;
  std::vector<double> r_;
  std::vector<char> terminal_;
  std::vector<double> initial_;
};

}  // namespace romance
