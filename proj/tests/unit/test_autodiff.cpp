#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "fmp/autodiff.hpp"
#include "fmp/error.hpp"
#include "fmp/fmp.hpp"
#include "fmp/graph.hpp"
#include "fmp/rng.hpp"
#include "oracle/oracle.hpp"

namespace ad = fmp::ad;
using fmp::Matrix;

namespace {

using Build = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

// loss = Σ out ⊙ R for a fixed random R; checks every input gradient against
// central differences.
void check_gradients(const Build& build, const std::vector<Matrix>& inputs, fmp::Rng& rng,
                     double rel = 1e-6, double abs = 1e-9) {
  Matrix weights;
  const auto loss_of = [&](const std::vector<Matrix>& values) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const Matrix& v : values) vars.push_back(tape.leaf(v));
    const ad::Var out = build(tape, vars);
    if (weights.empty()) weights = oracle::random_matrix(rng, out.rows(), out.cols());
    return ad::sum(ad::mul(out, tape.constant(weights))).value()(0, 0);
  };

  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const Matrix& v : inputs) vars.push_back(tape.leaf(v));
  const ad::Var out = build(tape, vars);
  if (weights.empty()) weights = oracle::random_matrix(rng, out.rows(), out.cols());
  const ad::Var loss = ad::sum(ad::mul(out, tape.constant(weights)));
  tape.backward(loss);

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto fn = [&](const Matrix& x) {
      std::vector<Matrix> values = inputs;
      values[k] = x;
      return loss_of(values);
    };
    const Matrix fd = oracle::central_difference(fn, inputs[k], 1e-6);
    const Matrix& g = vars[k].grad();
    REQUIRE(g.same_shape(fd));
    REQUIRE(oracle::tolerance_ratio(g, fd, rel, abs) <= 1.0);
  }
}

Matrix away_from(Matrix m, double point, double gap) {
  for (double& v : m.values())
    if (std::abs(v - point) < gap) v = v < point ? point - gap : point + gap;
  return m;
}

std::size_t dim(fmp::Rng& rng, std::size_t hi) { return 1 + static_cast<std::size_t>(rng.below(hi)); }

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("trivial gradients") {
  ad::Tape tape;
  const ad::Var x = tape.leaf(Matrix::from_rows({{1, 2}, {3, 4}}));
  tape.backward(ad::sum(x));
  CHECK(x.grad() == Matrix(2, 2, 1.0));
  tape.backward(ad::sum(ad::scale(x, 0.0)));
  CHECK(x.grad() == Matrix(2, 2, 0.0));
  CHECK_THROWS_AS(tape.backward(x), fmp::Error);
}

TEST_CASE("records stay in topological order and skip constants") {
  ad::Tape tape;
  const ad::Var a = tape.constant(Matrix(2, 2, 1.0));
  const ad::Var b = tape.constant(Matrix(2, 2, 2.0));
  ad::add(a, b);
  CHECK(tape.records().empty());
  const ad::Var w = tape.leaf(Matrix(2, 2, 0.5));
  const ad::Var loss = ad::sum(ad::relu(ad::matmul(ad::add(a, w), b)));
  for (const ad::Record& r : tape.records())
    for (std::size_t in : r.inputs) CHECK(in < r.output);
  CHECK(tape.records().size() == 4);
  tape.backward(loss);
  CHECK(a.grad().empty());
  CHECK(!w.grad().empty());
}

TEST_CASE("softmax examples") {
  ad::Tape tape;
  const ad::Var y = ad::row_softmax(tape.constant(Matrix::from_rows({{0, 0}, {std::log(3.0), 0}})));
  CHECK(y.value()(0, 0) == 0.5);
  CHECK(y.value()(0, 1) == 0.5);
  CHECK(y.value()(1, 0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(y.value()(1, 1) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("every primitive matches finite differences on 50 random shapes") {
  fmp::Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = dim(rng, 6), k = dim(rng, 6), n = dim(rng, 6);
    const Matrix a = oracle::random_matrix(rng, m, k);
    const Matrix b = oracle::random_matrix(rng, k, n);
    const Matrix c = oracle::random_matrix(rng, m, k);
    const Matrix bias = oracle::random_matrix(rng, 1, k);

    check_gradients([](ad::Tape&, const auto& v) { return ad::matmul(v[0], v[1]); }, {a, b}, rng);
    check_gradients([](ad::Tape&, const auto& v) { return ad::add(v[0], v[1]); }, {a, c}, rng);
    check_gradients([](ad::Tape&, const auto& v) { return ad::sub(v[0], v[1]); }, {a, c}, rng);
    check_gradients([](ad::Tape&, const auto& v) { return ad::mul(v[0], v[1]); }, {a, c}, rng);
    check_gradients([](ad::Tape&, const auto& v) { return ad::add_row(v[0], v[1]); }, {a, bias}, rng);
    check_gradients([](ad::Tape&, const auto& v) { return ad::scale(v[0], -1.3); }, {a}, rng);
    check_gradients([](ad::Tape&, const auto& v) { return ad::relu(v[0]); }, {away_from(a, 0.0, 1e-3)}, rng);
    check_gradients([](ad::Tape&, const auto& v) { return ad::row_softmax(v[0]); }, {a}, rng);
    check_gradients([](ad::Tape&, const auto& v) { return ad::clamp(v[0], -0.5, 0.7); },
                    {away_from(away_from(a, -0.5, 1e-3), 0.7, 1e-3)}, rng);
    check_gradients([](ad::Tape&, const auto& v) { return ad::row_sum_broadcast(v[0]); }, {a}, rng);
    check_gradients([](ad::Tape&, const auto& v) { return ad::sum(v[0]); }, {a}, rng);

    const std::size_t nodes_n = dim(rng, 20);
    const auto edges = oracle::random_edges(rng, nodes_n, 0.3);
    const fmp::SparseGraph g = fmp::build_graph(nodes_n, std::vector<fmp::Edge>(edges.begin(), edges.end()));
    check_gradients([&](ad::Tape&, const auto& v) { return ad::spmm(g, v[0]); },
                    {oracle::random_matrix(rng, nodes_n, n)}, rng);

    std::vector<int> labels(nodes_n);
    for (int& l : labels) l = static_cast<int>(rng.below(k));
    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < nodes_n; ++i)
      if (rng.bernoulli(0.6) || subset.empty()) subset.push_back(i);
    check_gradients([&](ad::Tape&, const auto& v) { return ad::cross_entropy_with_logits(v[0], labels, subset); },
                    {oracle::random_matrix(rng, nodes_n, k)}, rng);

    const std::size_t rows = dim(rng, 12) + 1;
    const auto delta = fmp::incident_vector(oracle::random_groups(rng, rows));
    check_gradients([&](ad::Tape&, const auto& v) { return ad::fairness_grad(v[0], v[1], delta); },
                    {oracle::random_matrix(rng, rows, n), oracle::random_matrix(rng, 1, n)}, rng);
  }
}

TEST_CASE("fused fairness gradient agrees with the composite route") {
  fmp::Rng rng(32);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(15), d = dim(rng, 5);
    const auto delta = fmp::incident_vector(oracle::random_groups(rng, n));
    const Matrix f = oracle::random_matrix(rng, n, d);
    const Matrix u = oracle::random_matrix(rng, 1, d);
    const Matrix w = oracle::random_matrix(rng, n, d);
    Matrix vals[2], gf[2], gu[2];
    for (int route = 0; route < 2; ++route) {
      ad::Tape tape;
      const ad::Var fv = tape.leaf(f), uv = tape.leaf(u);
      const ad::Var out = route == 0 ? ad::fairness_grad(fv, uv, delta) : ad::fairness_grad_composite(fv, uv, delta);
      tape.backward(ad::sum(ad::mul(out, tape.constant(w))));
      vals[route] = out.value();
      gf[route] = fv.grad();
      gu[route] = uv.grad();
    }
    CHECK(fmp::max_abs_diff(vals[0], vals[1]) <= 1e-12);
    CHECK(fmp::max_abs_diff(gf[0], gf[1]) <= 1e-12);
    CHECK(fmp::max_abs_diff(gu[0], gu[1]) <= 1e-12);
  }
}

TEST_CASE("softmax rejects non-finite input") {
  ad::Tape tape;
  const ad::Var x = tape.leaf(Matrix::from_rows({{std::nan(""), 0.0}}));
  CHECK_THROWS_AS(ad::row_softmax(x), fmp::Error);
}

TEST_CASE("gradients accumulate over fan-out") {
  ad::Tape tape;
  const ad::Var x = tape.leaf(Matrix::from_rows({{2.0}}));
  tape.backward(ad::sum(ad::mul(x, x)));
  CHECK(x.grad()(0, 0) == 4.0);
}

}  // TEST_SUITE
