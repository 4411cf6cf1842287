#include "romance/mlp.hpp"

#include <cmath>

#include "romance/error.hpp"

namespace romance {

Activation parse_activation(const std::string& name) {
  if (name == "none") return Activation::kNone;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kNone: return "none";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "none";
}

ParamSet make_mlp(const MlpShape& shape, std::mt19937_64& rng, const std::string& prefix) {
  if (shape.widths.size() < 2) throw ConfigError("MLP needs at least input and output widths");
  ParamSet ps;
  for (std::size_t l = 0; l < shape.layers(); ++l) {
    const int fan_in = shape.widths[l];
    const int fan_out = shape.widths[l + 1];
    if (fan_in <= 0 || fan_out <= 0) throw ConfigError("MLP widths must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Mat w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    Mat b(1, fan_out);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = u(rng);
    ps.add(prefix + "W" + std::to_string(l), std::move(w));
    ps.add(prefix + "b" + std::to_string(l), std::move(b));
  }
  return ps;
}

namespace {

void check_input(const ParamSet& params, Eigen::Index cols, const MlpShape& shape, std::size_t first) {
  if (cols != shape.input_size())
    throw ConfigError("MLP input width " + std::to_string(cols) + " != " + std::to_string(shape.input_size()));
  if (params.size() < first + 2 * shape.layers()) throw ConfigError("ParamSet too small for MLP shape");
}

}  // namespace

ad::Var mlp_forward(ad::Graph& g, const ParamSet& params, ad::Var input, const MlpShape& shape,
                    std::size_t first_param) {
  check_input(params, input.cols(), shape, first_param);
  ad::Var h = input;
  for (std::size_t l = 0; l < shape.layers(); ++l) {
    ad::Var w = g.param(params, first_param + 2 * l);
    ad::Var b = g.param(params, first_param + 2 * l + 1);
    h = ad::add(ad::matmul(h, w), b);
    if (l + 1 < shape.layers()) {
      if (shape.activation == Activation::kRelu) h = ad::relu(h);
      else if (shape.activation == Activation::kTanh) h = ad::tanh(h);
    }
  }
  return h;
}

Mat mlp_eval(const ParamSet& params, const Mat& input, const MlpShape& shape, std::size_t first_param) {
  check_input(params, input.cols(), shape, first_param);
  Mat h = input;
  for (std::size_t l = 0; l < shape.layers(); ++l) {
    Mat next = h * params.value(first_param + 2 * l);
    next.rowwise() += params.value(first_param + 2 * l + 1).row(0);
    if (l + 1 < shape.layers()) {
      if (shape.activation == Activation::kRelu) next = next.cwiseMax(0.0);
      else if (shape.activation == Activation::kTanh) next = next.array().tanh().matrix();
    }
    h = std::move(next);
  }
  return h;
}

}  // namespace romance
