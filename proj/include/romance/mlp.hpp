#pragma once

#include <random>
#include <string>
#include <vector>

#include "romance/autodiff.hpp"
#include "romance/param_set.hpp"

namespace romance {

enum class Activation { kNone, kRelu, kTanh };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

/// Layer widths including input and output, e.g. {in, 64, out}.
/// Hidden layers use the activation; the output layer is linear.
struct MlpShape {
  std::vector<int> widths;
  Activation activation = Activation::kRelu;

  int input_size() const { return widths.front(); }
  int output_size() const { return widths.back(); }
  std::size_t layers() const { return widths.size() - 1; }
};

/// Weights "W<l>" (in x out) and biases "b<l>" (1 x out), uniform in
/// [-1/sqrt(fan_in), 1/sqrt(fan_in)].
ParamSet make_mlp(const MlpShape& shape, std::mt19937_64& rng, const std::string& prefix = "");

/// Records the forward pass of a batch (rows) in `g`. `first_param` is the
/// index of W0 inside `params` so several nets can share one ParamSet.
ad::Var mlp_forward(ad::Graph& g, const ParamSet& params, ad::Var input, const MlpShape& shape,
                    std::size_t first_param = 0);

/// Same computation without recording a graph.
Mat mlp_eval(const ParamSet& params, const Mat& input, const MlpShape& shape,
             std::size_t first_param = 0);

}  // namespace romance
