#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "romance/autodiff.hpp"
#include "romance/error.hpp"
#include "romance/mlp.hpp"
#include "romance/optim.hpp"

using namespace romance;

namespace {

Mat random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Values bounded away from zero so relu/abs are differentiable at every entry.
Mat away_from_zero(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::uniform_real_distribution<double> mag(0.1, 1.5);
  std::bernoulli_distribution sign(0.5);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sign(rng) ? mag(rng) : -mag(rng);
  return m;
}

using UnaryBuilder = std::function<ad::Var(ad::Var)>;

// Contracts op(x) with a fixed random weight so every output entry matters.
void check_unary(const char* name, const UnaryBuilder& op, const std::function<Mat(std::mt19937_64&)>& sample,
                 int instances = 100) {
  std::mt19937_64 rng(12345);
  for (int i = 0; i < instances; ++i) {
    ParamSet ps;
    ps.add("x", sample(rng));
    ad::Graph probe;
    const ad::Var out = op(probe.param(ps, 0));
    const Mat w = random_mat(rng, out.rows(), out.cols());
    auto loss = [&](ad::Graph& g) { return ad::sum(ad::mul(op(g.param(ps, 0)), g.constant(w))); };
    const auto report = grad_check(loss, {&ps}, 1e-4);
    INFO(name << " instance " << i << " worst " << report.max_rel_error);
    REQUIRE(report.passed);
  }
}

}  // namespace

TEST_CASE("linear and quadratic gradients") {
  ParamSet ps;
  ps.add("w", Mat::Constant(1, 1, 0.7));
  ad::Graph g;
  const ad::Var w = g.param(ps, 0);
  const ad::Var x = g.constant(Mat::Constant(1, 1, 3.0));
  g.backward(ad::matmul(w, x));
  CHECK(g.gradients(ps)[0](0, 0) == doctest::Approx(3.0));

  ParamSet q;
  q.add("a", (Mat(2, 2) << 1.0, -2.0, 0.5, 3.0).finished());
  q.add("b", (Mat(1, 3) << 0.25, -1.0, 4.0).finished());
  ad::Graph h;
  const auto vars = h.params(q);
  h.backward(ad::add(ad::sum(ad::square(vars[0])), ad::sum(ad::square(vars[1]))));
  const auto grads = h.gradients(q);
  CHECK(grads[0].isApprox(2.0 * q.value(0)));
  CHECK(grads[1].isApprox(2.0 * q.value(1)));
}

TEST_CASE("unreachable parameters get zero gradient") {
  ParamSet ps;
  ps.add("used", Mat::Constant(2, 2, 1.5));
  ps.add("unused", Mat::Constant(3, 1, 2.0));
  ad::Graph g;
  const ad::Var used = g.param(ps, 0);
  g.param(ps, 1);
  g.backward(ad::sum(used));
  const auto grads = g.gradients(ps);
  CHECK(grads[0].isApprox(Mat::Ones(2, 2)));
  CHECK(grads[1].isZero());
  CHECK(grads[1].rows() == 3);
}

TEST_CASE("backward rejects non-scalar loss and double runs") {
  ParamSet ps;
  ps.add("x", Mat::Ones(2, 3));
  ad::Graph g;
  const ad::Var x = g.param(ps, 0);
  CHECK_THROWS_AS(g.backward(x), UsageError);
  const ad::Var l = ad::sum(x);
  g.backward(l);
  CHECK_THROWS_AS(g.backward(l), UsageError);
}

TEST_CASE("backward leaves forward values untouched") {
  std::mt19937_64 rng(7);
  ParamSet ps = make_mlp({{4, 8, 3}, Activation::kTanh}, rng);
  ad::Graph g;
  const ad::Var out = mlp_forward(g, ps, g.constant(random_mat(rng, 5, 4)), {{4, 8, 3}, Activation::kTanh});
  const ad::Var loss = ad::mean(ad::square(ad::softmax_rows(out)));
  std::vector<Mat> before;
  for (std::size_t i = 0; i < g.size(); ++i) before.push_back(g.value(ad::Var{&g, i}));
  g.backward(loss);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.value(ad::Var{&g, i}) == before[i]);
}

TEST_CASE("gradient accumulates through shared subexpressions") {
  ParamSet ps;
  ps.add("x", Mat::Constant(1, 1, 2.0));
  ad::Graph g;
  const ad::Var x = g.param(ps, 0);
  const ad::Var y = ad::mul(x, x);  // x^2
  g.backward(ad::sum(ad::add(y, ad::mul(y, x))));  // x^2 + x^3
  CHECK(g.gradients(ps)[0](0, 0) == doctest::Approx(2.0 * 2.0 + 3.0 * 4.0));
}

TEST_CASE("every op matches finite differences on 100 random instances") {
  auto general = [](std::mt19937_64& rng) { return random_mat(rng, 3, 4); };
  auto positive = [](std::mt19937_64& rng) { return random_mat(rng, 3, 4, 0.2, 2.0); };
  auto kinked = [](std::mt19937_64& rng) { return away_from_zero(rng, 3, 4); };

  check_unary("tanh", [](ad::Var x) { return ad::tanh(x); }, general);
  check_unary("relu", [](ad::Var x) { return ad::relu(x); }, kinked);
  check_unary("abs", [](ad::Var x) { return ad::abs(x); }, kinked);
  check_unary("exp", [](ad::Var x) { return ad::exp(x); }, general);
  check_unary("log", [](ad::Var x) { return ad::log(x); }, positive);
  check_unary("square", [](ad::Var x) { return ad::square(x); }, general);
  check_unary("scale", [](ad::Var x) { return ad::scale(x, -1.7); }, general);
  check_unary("add_scalar", [](ad::Var x) { return ad::add_scalar(x, 0.3); }, general);
  check_unary("softmax", [](ad::Var x) { return ad::softmax_rows(x); }, general);
  check_unary("logsumexp", [](ad::Var x) { return ad::logsumexp_rows(x); }, general);
  check_unary("sum", [](ad::Var x) { return ad::sum(x); }, general);
  check_unary("mean", [](ad::Var x) { return ad::mean(x); }, general);
  check_unary("sum_rows", [](ad::Var x) { return ad::sum_rows(x); }, general);
  check_unary("reshape", [](ad::Var x) { return ad::reshape(x, 2, 6); }, general);
  check_unary("gather", [](ad::Var x) { return ad::gather_cols(x, {3, 0, 2}); }, general);

  std::mt19937_64 rng(99);
  const Mat c34 = random_mat(rng, 3, 4);
  const Mat c45 = random_mat(rng, 4, 5);
  const Mat c53 = random_mat(rng, 5, 3);
  const Mat col = random_mat(rng, 3, 1);
  const Mat wide = random_mat(rng, 3, 8);
  check_unary("matmul lhs", [&](ad::Var x) { return ad::matmul(x, x.graph->constant(c45)); }, general);
  check_unary("matmul rhs", [&](ad::Var x) { return ad::matmul(x.graph->constant(c53), x); }, general);
  check_unary("add", [&](ad::Var x) { return ad::add(x, x.graph->constant(c34)); }, general);
  check_unary("add rhs", [&](ad::Var x) { return ad::add(x.graph->constant(c34), x); }, general);
  check_unary("sub rhs", [&](ad::Var x) { return ad::sub(x.graph->constant(c34), x); }, general);
  check_unary("row broadcast", [&](ad::Var x) { return ad::sub(x.graph->constant(c34), x); },
              [](std::mt19937_64& r) { return random_mat(r, 1, 4); });
  check_unary("scalar broadcast", [&](ad::Var x) { return ad::add(x.graph->constant(c34), x); },
              [](std::mt19937_64& r) { return random_mat(r, 1, 1); });
  check_unary("mul", [&](ad::Var x) { return ad::mul(x, x.graph->constant(c34)); }, general);
  check_unary("mul self", [&](ad::Var x) { return ad::mul(x, x); }, general);
  check_unary("mul column broadcast", [&](ad::Var x) { return ad::mul(x.graph->constant(c34), x); },
              [](std::mt19937_64& r) { return random_mat(r, 3, 1); });
  check_unary("row bilinear q", [&](ad::Var x) { return ad::row_bilinear(x, x.graph->constant(wide)); },
              [](std::mt19937_64& r) { return random_mat(r, 3, 2); });
  check_unary("row bilinear w", [&](ad::Var x) { return ad::row_bilinear(x.graph->constant(wide.leftCols(2)), x); },
              [](std::mt19937_64& r) { return random_mat(r, 3, 8); });
  check_unary("concat", [&](ad::Var x) { return ad::concat_cols({x.graph->constant(col), x, ad::tanh(x)}); }, general);
}

TEST_CASE("row bilinear forward") {
  ad::Graph g;
  const ad::Var q = g.constant((Mat(1, 2) << 2.0, 3.0).finished());
  const ad::Var w = g.constant((Mat(1, 4) << 1.0, 10.0, 100.0, 1000.0).finished());
  const Mat out = ad::row_bilinear(q, w).value();
  CHECK(out(0, 0) == doctest::Approx(2.0 * 1.0 + 3.0 * 100.0));
  CHECK(out(0, 1) == doctest::Approx(2.0 * 10.0 + 3.0 * 1000.0));
}

TEST_CASE("stabilized softmax and logsumexp survive large inputs") {
  ad::Graph g;
  const ad::Var x = g.constant((Mat(1, 3) << 1000.0, 1001.0, 999.0).finished());
  const Mat sm = ad::softmax_rows(x).value();
  CHECK(sm.allFinite());
  CHECK(sm.sum() == doctest::Approx(1.0));
  const double lse = ad::logsumexp_rows(x).value()(0, 0);
  CHECK(lse == doctest::Approx(1001.0 + std::log(1.0 + std::exp(-1.0) + std::exp(-2.0))));
}

TEST_CASE("shape mismatches are configuration errors") {
  ad::Graph g;
  const ad::Var a = g.constant(Mat::Ones(2, 3));
  const ad::Var b = g.constant(Mat::Ones(2, 2));
  CHECK_THROWS_AS(ad::matmul(a, b), ConfigError);
  CHECK_THROWS_AS(ad::add(a, b), ConfigError);
}

TEST_CASE("mlp forward trivial cases") {
  const MlpShape single{{2, 2}, Activation::kNone};
  ParamSet ident;
  ident.add("W0", Mat::Identity(2, 2));
  ident.add("b0", Mat::Zero(1, 2));
  const Mat in = (Mat(1, 2) << 1.0, 2.0).finished();
  CHECK(mlp_eval(ident, in, single) == in);

  std::mt19937_64 rng(3);
  const MlpShape shape{{3, 64, 4}, Activation::kRelu};
  ParamSet zero = make_mlp(shape, rng);
  for (std::size_t i = 0; i < zero.size(); ++i) zero.assign(i, Mat::Zero(zero.value(i).rows(), zero.value(i).cols()));
  CHECK(mlp_eval(zero, random_mat(rng, 5, 3), shape).isZero());

  CHECK_THROWS_AS(mlp_eval(zero, random_mat(rng, 1, 4), shape), ConfigError);
}

TEST_CASE("mlp forward is deterministic and matches the graph path") {
  const MlpShape shape{{6, 64, 5}, Activation::kRelu};
  std::mt19937_64 rng_a(42);
  std::mt19937_64 rng_b(42);
  const ParamSet a = make_mlp(shape, rng_a);
  const ParamSet b = make_mlp(shape, rng_b);
  CHECK(a == b);
  std::mt19937_64 rng(5);
  const Mat in = random_mat(rng, 7, 6);
  const Mat first = mlp_eval(a, in, shape);
  const Mat second = mlp_eval(a, in, shape);
  CHECK(first == second);
  ad::Graph g;
  CHECK(mlp_forward(g, a, g.constant(in), shape).value() == first);
}

TEST_CASE("mlp initialization bounds") {
  std::mt19937_64 rng(11);
  const ParamSet ps = make_mlp({{16, 64, 3}, Activation::kRelu}, rng);
  CHECK(ps.value(0).cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(16.0));
  CHECK(ps.value(2).cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(64.0));
}

TEST_CASE("param set checkpoint roundtrip and digest") {
  std::mt19937_64 rng(8);
  const ParamSet ps = make_mlp({{3, 5, 2}, Activation::kTanh}, rng, "net.");
  const ParamSet back = ParamSet::from_json(ps.to_json());
  CHECK(back == ps);
  CHECK(back.digest() == ps.digest());
  ParamSet changed = ps;
  changed.add_to(0, Mat::Constant(3, 5, 1e-12));
  CHECK(changed.digest() != ps.digest());
  CHECK_THROWS_AS(changed.assign(0, Mat::Zero(2, 2)), ConfigError);
  nlohmann::json bad = ps.to_json();
  bad["format_version"] = 99;
  CHECK_THROWS_AS(ParamSet::from_json(bad), ConfigError);
}
