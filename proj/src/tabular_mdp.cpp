#include "romance/tabular_mdp.hpp"

#include <cmath>
#include <string>

#include "romance/error.hpp"

namespace romance {

TabularMDP::TabularMDP(int states, int actions, double gamma)
    : states_(states), actions_(actions), gamma_(gamma) {
  if (states <= 0 || actions <= 0) throw ConfigError("TabularMDP needs positive state and action counts");
  const auto n = static_cast<std::size_t>(states) * static_cast<std::size_t>(actions) * static_cast<std::size_t>(states);
  p_.assign(n, 0.0);
  r_.assign(n, 0.0);
  terminal_.assign(static_cast<std::size_t>(states), 0);
  initial_.assign(static_cast<std::size_t>(states), 0.0);
}

double TabularMDP::expected_reward(int s, int a) const {
  double total = 0.0;
  for (int s2 = 0; s2 < states_; ++s2) total += p(s, a, s2) * r(s, a, s2);
  return total;
}

void TabularMDP::validate(double tol) const {
  for (int s = 0; s < states_; ++s)
    for (int a = 0; a < actions_; ++a) {
      double row = 0.0;
      for (int s2 = 0; s2 < states_; ++s2) {
        const double pr = p(s, a, s2);
        if (pr < 0.0 || !std::isfinite(pr)) throw ConfigError("invalid transition probability");
        if (!std::isfinite(r(s, a, s2))) throw ConfigError("non-finite reward");
        row += pr;
      }
      if (std::abs(row - 1.0) > tol)
        throw ConfigError("transition row (" + std::to_string(s) + "," + std::to_string(a) + ") sums to " +
                          std::to_string(row));
    }
  double init = 0.0;
  for (double d : initial_) init += d;
  if (std::abs(init - 1.0) > tol) throw ConfigError("initial distribution does not sum to 1");
}

}  // namespace romance
