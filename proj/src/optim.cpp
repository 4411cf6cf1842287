#include "romance/optim.hpp"

#include <cmath>

#include "romance/error.hpp"

namespace romance {

double global_norm(const std::vector<Mat>& grads) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  return std::sqrt(sq);
}

void RmsProp::step(ParamSet& params, std::vector<Mat> grads) {
  if (grads.size() != params.size()) throw UsageError("gradient count does not match ParamSet");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].allFinite())
      throw NumericalError("non-finite gradient for parameter '" + params.name(i) + "'");
  }
  if (square_avg_.empty()) square_avg_ = params.zeros_like();
  if (cfg_.grad_clip > 0.0) {
    const double norm = global_norm(grads);
    if (norm > cfg_.grad_clip) {
      const double s = cfg_.grad_clip / norm;
      for (auto& g : grads) g *= s;
    }
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    Mat& v = square_avg_[i];
    v = cfg_.alpha * v + (1.0 - cfg_.alpha) * grads[i].cwiseAbs2();
    const Mat delta = (-cfg_.lr * grads[i].array() / (v.array().sqrt() + cfg_.eps)).matrix();
    params.add_to(i, delta);
  }
}

GradCheckReport grad_check(const LossBuilder& loss, const std::vector<ParamSet*>& params, double tol,
                           double step, double floor) {
  std::vector<std::vector<Mat>> analytic;
  {
    ad::Graph g;
    ad::Var l = loss(g);
    g.backward(l);
    for (ParamSet* ps : params) analytic.push_back(g.gradients(*ps));
  }
  auto eval = [&]() {
    ad::Graph g;
    return loss(g).value()(0, 0);
  };

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    ParamSet& ps = *params[p];
    for (std::size_t e = 0; e < ps.size(); ++e) {
      Mat work = ps.value(e);
      for (Eigen::Index k = 0; k < work.size(); ++k) {
        const double orig = work.data()[k];
        work.data()[k] = orig + step;
        ps.assign(e, work);
        const double up = eval();
        work.data()[k] = orig - step;
        ps.assign(e, work);
        const double down = eval();
        work.data()[k] = orig;
        ps.assign(e, work);

        const double numeric = (up - down) / (2.0 * step);
        const double a = analytic[p][e].data()[k];
        const double denom = std::max({std::abs(a), std::abs(numeric), floor});
        const double rel = std::abs(a - numeric) / denom;
        ++report.checked;
        if (rel > report.max_rel_error || report.worst_index < 0) {
          report.max_rel_error = rel;
          report.worst_param = ps.name(e);
          report.worst_index = k;
          report.worst_analytic = a;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace romance
