#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "romance/param_set.hpp"

// Minimal tape-free reverse-mode differentiation over row-major matrices.
// A Graph lives for one loss evaluation: build, call backward once, read
// gradients, discard.

namespace romance::ad {

enum class Op {
  kConstant,
  kParam,
  kMatMul,
  kAdd,        // same shape, or rhs broadcast as a row (1 x c) or scalar (1 x 1)
  kSub,
  kMul,        // elementwise, same shape or rhs column broadcast (r x 1)
  kScale,
  kAddScalar,
  kTanh,
  kRelu,
  kAbs,
  kExp,
  kLog,
  kSquare,
  kSoftmaxRows,
  kLogSumExpRows,
  kSum,
  kMean,
  kSumRows,
  kGatherCols,
  kReshape,
  kRowBilinear,
  kConcatCols,
  kCustom,
};

class Graph;

/// Handle to a node inside a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Mat& value() const;
  const Mat& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Backward rule for user-supplied ops: receives the upstream gradient and
/// the input values, returns one gradient per input.
using CustomBackward =
    std::function<std::vector<Mat>(const Mat& upstream, const std::vector<const Mat*>& inputs,
                                   const Mat& output)>;

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Mat value);
  /// Leaf bound to entry `index` of `params`; gradients are read back
  /// through gradients(params). The ParamSet must outlive the graph.
  Var param(const ParamSet& params, std::size_t index);
  /// All entries of a ParamSet as leaves, in order.
  std::vector<Var> params(const ParamSet& params);

  /// Reverse sweep from a 1x1 loss. Each node is visited once, in reverse
  /// creation order (a valid reverse topological order).
  void backward(Var loss);

  /// Gradients aligned with `params`; entries that never entered the graph
  /// (or are unreachable from the loss) are zero.
  std::vector<Mat> gradients(const ParamSet& params) const;

  const Mat& value(Var v) const { return nodes_.at(v.id).value; }
  const Mat& grad(Var v) const { return nodes_.at(v.id).grad; }
  Op op(Var v) const { return nodes_.at(v.id).op; }
  std::size_t size() const { return nodes_.size(); }
  bool has_run_backward() const { return backward_done_; }

  // Internal node representation; ops in autodiff.cpp build these.
  struct Node {
    Op op = Op::kConstant;
    Mat value;
    Mat grad;
    std::vector<std::size_t> parents;
    // op-specific payload
    double scalar = 0.0;
    std::vector<int> indices;
    Eigen::Index aux = 0;
    const ParamSet* owner = nullptr;
    std::size_t param_index = 0;
    CustomBackward custom;
  };

  Var push(Node node);

 private:
  void accumulate(std::size_t id, const Mat& g);
  void backprop_node(const Node& node);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var tanh(Var a);
Var relu(Var a);
Var abs(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
/// Row-wise softmax, max-subtracted.
Var softmax_rows(Var a);
/// Row-wise log-sum-exp (r x 1), max-subtracted.
Var logsumexp_rows(Var a);
Var sum(Var a);
Var mean(Var a);
/// r x c -> r x 1.
Var sum_rows(Var a);
/// out(r, 0) = a(r, idx[r]).
Var gather_cols(Var a, const std::vector<int>& idx);
/// Row-major reinterpretation.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
/// q: B x n, w: B x (n*E) laid out [i*E + e]; out(b, e) = sum_i q(b,i) w(b, i*E+e).
Var row_bilinear(Var q, Var w);
Var concat_cols(const std::vector<Var>& parts);
/// Escape hatch for ops not provided above.
Var custom(const std::vector<Var>& inputs, Mat output, CustomBackward backward);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, double c) { return scale(a, c); }

}  // namespace romance::ad
