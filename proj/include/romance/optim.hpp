#pragma once

#include <functional>
#include <string>
#include <vector>

#include "romance/autodiff.hpp"
#include "romance/param_set.hpp"

namespace romance {

struct RmsPropConfig {
  double lr = 4e-4;
  double alpha = 0.99;
  double eps = 1e-5;
  /// Global L2 clip applied before the step; <= 0 disables.
  double grad_clip = 0.0;
};

/// v <- alpha v + (1 - alpha) g^2 ;  p <- p - lr g / (sqrt(v) + eps)
class RmsProp {
 public:
  RmsProp() = default;
  explicit RmsProp(RmsPropConfig cfg) : cfg_(cfg) {}

  /// Throws NumericalError naming the first non-finite gradient entry.
  void step(ParamSet& params, std::vector<Mat> grads);

  const RmsPropConfig& config() const { return cfg_; }
  const std::vector<Mat>& square_avg() const { return square_avg_; }
  void reset() { square_avg_.clear(); }

 private:
  RmsPropConfig cfg_;
  std::vector<Mat> square_avg_;
};

double global_norm(const std::vector<Mat>& grads);

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Builds the scalar loss inside the provided graph from the current
/// parameter values.
using LossBuilder = std::function<ad::Var(ad::Graph&)>;

/// Compares analytic gradients with central finite differences for every
/// scalar in `params`. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const LossBuilder& loss, const std::vector<ParamSet*>& params, double tol,
                           double step = 1e-5, double floor = 1e-6);

}  // namespace romance
