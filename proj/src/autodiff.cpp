#include "romance/autodiff.hpp"

#include <cmath>
#include <string>

#include "romance/error.hpp"

namespace romance::ad {

namespace {

Graph* same_graph(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) throw UsageError("operands belong to different graphs");
  return a.graph;
}

std::string shape_str(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Mat row_softmax(const Mat& a) {
  Mat out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double mx = a.row(r).maxCoeff();
    out.row(r) = (a.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

}  // namespace

const Mat& Var::value() const { return graph->value(*this); }
const Mat& Var::grad() const { return graph->grad(*this); }

Var Graph::push(Node node) {
  node.grad = Mat::Zero(node.value.rows(), node.value.cols());
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Graph::constant(Mat value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::param(const ParamSet& params, std::size_t index) {
  Node n;
  n.op = Op::kParam;
  n.value = params.value(index);
  n.owner = &params;
  n.param_index = index;
  return push(std::move(n));
}

std::vector<Var> Graph::params(const ParamSet& params) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back(param(params, i));
  return out;
}

void Graph::accumulate(std::size_t id, const Mat& g) { nodes_[id].grad += g; }

void Graph::backward(Var loss) {
  if (loss.graph != this) throw UsageError("loss belongs to another graph");
  const Node& root = nodes_.at(loss.id);
  if (root.value.rows() != 1 || root.value.cols() != 1)
    throw UsageError("backward requires a scalar loss, got " + shape_str(root.value));
  if (backward_done_) throw UsageError("backward already run on this graph");
  backward_done_ = true;
  nodes_[loss.id].grad(0, 0) = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    if (nodes_[id].parents.empty()) continue;
    backprop_node(nodes_[id]);
  }
}

std::vector<Mat> Graph::gradients(const ParamSet& params) const {
  std::vector<Mat> out = params.zeros_like();
  for (const auto& n : nodes_)
    if (n.op == Op::kParam && n.owner == &params) out[n.param_index] += n.grad;
  return out;
}

void Graph::backprop_node(const Node& n) {
  const Mat& g = n.grad;
  auto in = [&](std::size_t k) -> const Mat& { return nodes_[n.parents[k]].value; };
  const std::size_t p0 = n.parents[0];
  switch (n.op) {
    case Op::kConstant:
    case Op::kParam:
      break;
    case Op::kMatMul:
      accumulate(p0, g * in(1).transpose());
      accumulate(n.parents[1], in(0).transpose() * g);
      break;
    case Op::kAdd:
    case Op::kSub: {
      accumulate(p0, g);
      const Mat& b = in(1);
      const double sign = n.op == Op::kAdd ? 1.0 : -1.0;
      if (b.rows() == g.rows() && b.cols() == g.cols()) {
        accumulate(n.parents[1], sign * g);
      } else if (b.rows() == 1 && b.cols() == g.cols()) {
        accumulate(n.parents[1], sign * g.colwise().sum());
      } else {
        Mat s(1, 1);
        s(0, 0) = sign * g.sum();
        accumulate(n.parents[1], s);
      }
      break;
    }
    case Op::kMul: {
      const Mat& a = in(0);
      const Mat& b = in(1);
      if (b.cols() == a.cols()) {
        accumulate(p0, g.cwiseProduct(b));
        accumulate(n.parents[1], g.cwiseProduct(a));
      } else {
        accumulate(p0, (g.array().colwise() * b.col(0).array()).matrix());
        accumulate(n.parents[1], g.cwiseProduct(a).rowwise().sum());
      }
      break;
    }
    case Op::kScale:
      accumulate(p0, n.scalar * g);
      break;
    case Op::kAddScalar:
      accumulate(p0, g);
      break;
    case Op::kTanh:
      accumulate(p0, g.cwiseProduct((1.0 - n.value.array().square()).matrix()));
      break;
    case Op::kRelu:
      accumulate(p0, (g.array() * (in(0).array() > 0.0).cast<double>()).matrix());
      break;
    case Op::kAbs:
      accumulate(p0, (g.array() * in(0).array().sign()).matrix());
      break;
    case Op::kExp:
      accumulate(p0, g.cwiseProduct(n.value));
      break;
    case Op::kLog:
      accumulate(p0, g.cwiseQuotient(in(0)));
      break;
    case Op::kSquare:
      accumulate(p0, 2.0 * g.cwiseProduct(in(0)));
      break;
    case Op::kSoftmaxRows: {
      // dx = y * (g - sum(g*y))
      const Mat& y = n.value;
      const Vec dot = g.cwiseProduct(y).rowwise().sum();
      Mat dx = y.cwiseProduct(g);
      dx -= (y.array().colwise() * dot.array()).matrix();
      accumulate(p0, dx);
      break;
    }
    case Op::kLogSumExpRows: {
      const Mat sm = row_softmax(in(0));
      accumulate(p0, (sm.array().colwise() * g.col(0).array()).matrix());
      break;
    }
    case Op::kSum:
      accumulate(p0, Mat::Constant(in(0).rows(), in(0).cols(), g(0, 0)));
      break;
    case Op::kMean: {
      const Mat& a = in(0);
      accumulate(p0, Mat::Constant(a.rows(), a.cols(), g(0, 0) / static_cast<double>(a.size())));
      break;
    }
    case Op::kSumRows: {
      const Mat& a = in(0);
      accumulate(p0, g.col(0).replicate(1, a.cols()));
      break;
    }
    case Op::kGatherCols: {
      Mat dx = Mat::Zero(in(0).rows(), in(0).cols());
      for (Eigen::Index r = 0; r < dx.rows(); ++r) dx(r, n.indices[static_cast<std::size_t>(r)]) = g(r, 0);
      accumulate(p0, dx);
      break;
    }
    case Op::kReshape: {
      const Mat& a = in(0);
      accumulate(p0, Eigen::Map<const Mat>(g.data(), a.rows(), a.cols()));
      break;
    }
    case Op::kRowBilinear: {
      const Mat& q = in(0);
      const Mat& w = in(1);
      const Eigen::Index embed = n.aux;
      Mat dq = Mat::Zero(q.rows(), q.cols());
      Mat dw = Mat::Zero(w.rows(), w.cols());
      for (Eigen::Index b = 0; b < q.rows(); ++b)
        for (Eigen::Index i = 0; i < q.cols(); ++i)
          for (Eigen::Index e = 0; e < embed; ++e) {
            dq(b, i) += g(b, e) * w(b, i * embed + e);
            dw(b, i * embed + e) = g(b, e) * q(b, i);
          }
      accumulate(p0, dq);
      accumulate(n.parents[1], dw);
      break;
    }
    case Op::kConcatCols: {
      Eigen::Index offset = 0;
      for (std::size_t k = 0; k < n.parents.size(); ++k) {
        const Eigen::Index c = in(k).cols();
        accumulate(n.parents[k], g.middleCols(offset, c));
        offset += c;
      }
      break;
    }
    case Op::kCustom: {
      std::vector<const Mat*> inputs;
      for (std::size_t k = 0; k < n.parents.size(); ++k) inputs.push_back(&in(k));
      const std::vector<Mat> grads = n.custom(g, inputs, n.value);
      if (grads.size() != n.parents.size()) throw UsageError("custom backward returned wrong arity");
      for (std::size_t k = 0; k < grads.size(); ++k) accumulate(n.parents[k], grads[k]);
      break;
    }
  }
}

Var matmul(Var a, Var b) {
  Graph* g = same_graph(a, b);
  const Mat& av = a.value();
  const Mat& bv = b.value();
  if (av.cols() != bv.rows()) throw ConfigError("matmul shape mismatch " + shape_str(av) + " * " + shape_str(bv));
  Graph::Node n;
  n.op = Op::kMatMul;
  n.value.resize(av.rows(), bv.cols());
  n.value.noalias() = av * bv;  // same kernel as mlp_eval, so both paths agree bitwise
  n.parents = {a.id, b.id};
  return g->push(std::move(n));
}

namespace {

Var add_like(Var a, Var b, Op op) {
  Graph* g = same_graph(a, b);
  const Mat& av = a.value();
  const Mat& bv = b.value();
  const double sign = op == Op::kAdd ? 1.0 : -1.0;
  Mat out;
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    out = av + sign * bv;
  } else if (bv.rows() == 1 && bv.cols() == av.cols()) {
    out = av;
    out.rowwise() += sign * bv.row(0);
  } else if (bv.size() == 1) {
    out = (av.array() + sign * bv(0, 0)).matrix();
  } else {
    throw ConfigError("add shape mismatch " + shape_str(av) + " vs " + shape_str(bv));
  }
  Graph::Node n;
  n.op = op;
  n.value = std::move(out);
  n.parents = {a.id, b.id};
  return g->push(std::move(n));
}

}  // namespace

Var add(Var a, Var b) { return add_like(a, b, Op::kAdd); }
Var sub(Var a, Var b) { return add_like(a, b, Op::kSub); }

Var mul(Var a, Var b) {
  Graph* g = same_graph(a, b);
  const Mat& av = a.value();
  const Mat& bv = b.value();
  Graph::Node n;
  n.op = Op::kMul;
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    n.value = av.cwiseProduct(bv);
  } else if (av.rows() == bv.rows() && bv.cols() == 1) {
    n.value = (av.array().colwise() * bv.col(0).array()).matrix();
  } else {
    throw ConfigError("mul shape mismatch " + shape_str(av) + " vs " + shape_str(bv));
  }
  n.parents = {a.id, b.id};
  return g->push(std::move(n));
}

namespace {

Var unary(Var a, Op op, Mat value, double scalar = 0.0) {
  Graph::Node n;
  n.op = op;
  n.value = std::move(value);
  n.parents = {a.id};
  n.scalar = scalar;
  return a.graph->push(std::move(n));
}

}  // namespace

Var scale(Var a, double c) { return unary(a, Op::kScale, c * a.value(), c); }
Var add_scalar(Var a, double c) { return unary(a, Op::kAddScalar, (a.value().array() + c).matrix(), c); }
Var tanh(Var a) { return unary(a, Op::kTanh, a.value().array().tanh().matrix()); }
Var relu(Var a) { return unary(a, Op::kRelu, a.value().cwiseMax(0.0)); }
Var abs(Var a) { return unary(a, Op::kAbs, a.value().cwiseAbs()); }
Var exp(Var a) { return unary(a, Op::kExp, a.value().array().exp().matrix()); }
Var log(Var a) { return unary(a, Op::kLog, a.value().array().log().matrix()); }
Var square(Var a) { return unary(a, Op::kSquare, a.value().array().square().matrix()); }
Var softmax_rows(Var a) { return unary(a, Op::kSoftmaxRows, row_softmax(a.value())); }

Var logsumexp_rows(Var a) {
  const Mat& v = a.value();
  Mat out(v.rows(), 1);
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double mx = v.row(r).maxCoeff();
    out(r, 0) = mx + std::log((v.row(r).array() - mx).exp().sum());
  }
  return unary(a, Op::kLogSumExpRows, std::move(out));
}

Var sum(Var a) { return unary(a, Op::kSum, Mat::Constant(1, 1, a.value().sum())); }
Var mean(Var a) { return unary(a, Op::kMean, Mat::Constant(1, 1, a.value().mean())); }
Var sum_rows(Var a) { return unary(a, Op::kSumRows, a.value().rowwise().sum()); }

Var gather_cols(Var a, const std::vector<int>& idx) {
  const Mat& v = a.value();
  if (static_cast<Eigen::Index>(idx.size()) != v.rows()) throw ConfigError("gather_cols: index count != rows");
  Mat out(v.rows(), 1);
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const int c = idx[static_cast<std::size_t>(r)];
    if (c < 0 || c >= v.cols()) throw ConfigError("gather_cols: index out of range");
    out(r, 0) = v(r, c);
  }
  Graph::Node n;
  n.op = Op::kGatherCols;
  n.value = std::move(out);
  n.parents = {a.id};
  n.indices = idx;
  return a.graph->push(std::move(n));
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  const Mat& v = a.value();
  if (rows * cols != v.size()) throw ConfigError("reshape: element count mismatch");
  return unary(a, Op::kReshape, Eigen::Map<const Mat>(v.data(), rows, cols));
}

Var row_bilinear(Var q, Var w) {
  Graph* g = same_graph(q, w);
  const Mat& qv = q.value();
  const Mat& wv = w.value();
  if (qv.rows() != wv.rows() || wv.cols() % qv.cols() != 0)
    throw ConfigError("row_bilinear shape mismatch " + shape_str(qv) + " vs " + shape_str(wv));
  const Eigen::Index embed = wv.cols() / qv.cols();
  Mat out = Mat::Zero(qv.rows(), embed);
  for (Eigen::Index b = 0; b < qv.rows(); ++b)
    for (Eigen::Index i = 0; i < qv.cols(); ++i)
      out.row(b) += qv(b, i) * wv.row(b).segment(i * embed, embed);
  Graph::Node n;
  n.op = Op::kRowBilinear;
  n.value = std::move(out);
  n.parents = {q.id, w.id};
  n.aux = embed;
  return g->push(std::move(n));
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw UsageError("concat_cols of nothing");
  Graph* g = parts.front().graph;
  Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.graph != g) throw UsageError("operands belong to different graphs");
    if (p.rows() != rows) throw ConfigError("concat_cols row mismatch");
    cols += p.cols();
  }
  Mat out(rows, cols);
  Graph::Node n;
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
    n.parents.push_back(p.id);
  }
  n.op = Op::kConcatCols;
  n.value = std::move(out);
  return g->push(std::move(n));
}

Var custom(const std::vector<Var>& inputs, Mat output, CustomBackward backward) {
  if (inputs.empty()) throw UsageError("custom op needs inputs");
  Graph::Node n;
  n.op = Op::kCustom;
  n.value = std::move(output);
  for (const Var& v : inputs) n.parents.push_back(v.id);
  n.custom = std::move(backward);
  return inputs.front().graph->push(std::move(n));
}

}  // namespace romance::ad
