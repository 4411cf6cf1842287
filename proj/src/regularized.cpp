#include "romance/regularized.hpp"

#include <cmath>
#include <limits>

#include "romance/error.hpp"

namespace romance {

Vec reference_prior(int n_agents, double delta) {
  if (n_agents < 1) throw ConfigError("reference prior needs at least one agent");
  if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in [0, 1]");
  Vec p = Vec::Constant(n_agents + 1, delta / n_agents);
  p(n_agents) = 1.0 - delta;
  return p;
}

namespace {

double max_supported(const Vec& q, const Vec& prior) {
  if (q.size() != prior.size()) throw ConfigError("value and prior lengths differ");
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < q.size(); ++a)
    if (prior(a) > 0.0 && q(a) > m) m = q(a);
  if (!std::isfinite(m)) throw NumericalError("prior has no support or values are not finite");
  return m;
}

}  // namespace

double soft_value(const Vec& q, const Vec& prior, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  const double m = max_supported(q, prior);
  double z = 0.0;
  for (Eigen::Index a = 0; a < q.size(); ++a)
    if (prior(a) > 0.0) z += prior(a) * std::exp((q(a) - m) / lambda);
  return m + lambda * std::log(z);
}

Vec soft_policy(const Vec& q, const Vec& prior, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  const double m = max_supported(q, prior);
  Vec out = Vec::Zero(q.size());
  for (Eigen::Index a = 0; a < q.size(); ++a)
    if (prior(a) > 0.0) out(a) = prior(a) * std::exp((q(a) - m) / lambda);
  return out / out.sum();
}

}  // namespace romance
