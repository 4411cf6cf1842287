#pragma once

#include "romance/param_set.hpp"

namespace romance {

/// (delta/n, ..., delta/n, 1 - delta): attack actions first, null last.
Vec reference_prior(int n_agents, double delta);

/// lambda * log sum_a p(a) exp(q(a) / lambda), max-subtracted. Entries with
/// p(a) = 0 contribute nothing.
double soft_value(const Vec& q, const Vec& prior, double lambda);

/// p(a) exp(q(a) / lambda) / Z, max-subtracted.
Vec soft_policy(const Vec& q, const Vec& prior, double lambda);

}  // namespace romance
