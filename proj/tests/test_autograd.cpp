#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "sowreap/autograd.hpp"
#include "sowreap/rng.hpp"

using namespace sowreap;
using namespace sowreap::nn;

namespace {

using G = Graph<double>;
using P = Parameter<double>;
using Builder = std::function<Var(G&, std::vector<Var>&)>;

P random_param(const std::string& name, int r, int c, Rng& rng, double scale = 1.0) {
  P p(name, r, c);
  for (auto& v : p.value) v = scale * rng.normal();
  return p;
}

// Random linear functional of a matrix node, so every entry gets a gradient.
Var reduce(G& g, Var x, Rng& rng) {
  std::vector<double> w(static_cast<std::size_t>(g.cols(x)));
  std::vector<double> u(static_cast<std::size_t>(g.rows(x)));
  for (auto& v : w) v = rng.normal();
  for (auto& v : u) v = rng.normal();
  Var col = g.matmul(x, g.input(g.cols(x), 1, w));
  return g.matmul(g.input(1, g.rows(x), u), col);
}

double evaluate(std::vector<P>& params, const Builder& build) {
  G g(false);
  std::vector<Var> vars;
  for (auto& p : params) vars.push_back(g.param(p));
  return g.scalar(build(g, vars));
}

// Max relative error between backward() and central differences.
double gradient_error(std::vector<P>& params, const Builder& build) {
  for (auto& p : params) p.zero_grad();
  {
    G g(true);
    std::vector<Var> vars;
    for (auto& p : params) vars.push_back(g.param(p));
    g.backward(build(g, vars));
  }
  double worst = 0.0;
  const double h = 1e-6;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p.value[i];
      p.value[i] = keep + h;
      const double up = evaluate(params, build);
      p.value[i] = keep - h;
      const double down = evaluate(params, build);
      p.value[i] = keep;
      const double numeric = (up - down) / (2 * h);
      const double err = std::abs(numeric - p.grad[i]) / std::max(1.0, std::abs(numeric) + std::abs(p.grad[i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("gradients: dense ops") {
  Rng rng(1);
  std::vector<P> ps = {random_param("x", 3, 4, rng), random_param("w", 4, 5, rng), random_param("b", 1, 5, rng),
                       random_param("y", 3, 5, rng)};
  const std::uint64_t seed = 77;
  const Builder build = [&](G& g, std::vector<Var>& v) {
    Rng r(seed);
    Var h = g.linear(v[0], v[1], v[2]);
    h = g.add(h, g.scale(v[3], 0.5));
    Var m = g.matmul(v[0], v[1]);
    return g.combine(reduce(g, h, r), 1.0, reduce(g, m, r), -0.3);
  };
  CHECK(gradient_error(ps, build) < 1e-7);
}

TEST_CASE("gradients: relu away from the kink") {
  Rng rng(2);
  std::vector<P> ps = {random_param("x", 4, 6, rng)};
  for (auto& v : ps[0].value)
    if (std::abs(v) < 0.05) v = 0.5;
  const Builder build = [](G& g, std::vector<Var>& v) {
    Rng r(3);
    return reduce(g, g.relu(v[0]), r);
  };
  CHECK(gradient_error(ps, build) < 1e-7);
}

TEST_CASE("gradients: layer norm") {
  Rng rng(4);
  std::vector<P> ps = {random_param("x", 3, 8, rng), random_param("g", 1, 8, rng), random_param("b", 1, 8, rng)};
  const Builder build = [](G& g, std::vector<Var>& v) {
    Rng r(5);
    return reduce(g, g.layer_norm(v[0], v[1], v[2]), r);
  };
  CHECK(gradient_error(ps, build) < 1e-6);
}

TEST_CASE("gradients: embedding gather with repeated ids") {
  Rng rng(6);
  std::vector<P> ps = {random_param("table", 5, 4, rng)};
  const std::vector<int> ids = {3, 1, 3, 0};
  const Builder build = [&](G& g, std::vector<Var>& v) {
    Rng r(7);
    return reduce(g, g.embedding(v[0], ids), r);
  };
  CHECK(gradient_error(ps, build) < 1e-7);
}

TEST_CASE("gradients: masked causal attention, cross entropy and coverage") {
  Rng rng(8);
  const AttentionShape s{2, 2, 3, 4};
  std::vector<P> ps = {random_param("q", s.batch * s.q_len, 6, rng), random_param("k", s.batch * s.k_len, 6, rng),
                       random_param("v", s.batch * s.k_len, 6, rng), random_param("w", 6, 5, rng)};
  const std::vector<char> key_valid = {1, 1, 1, 0, 1, 1, 1, 1};
  const std::vector<char> query_valid = {1, 1, 1, 1, 1, 0};
  const std::vector<int> targets = {0, 4, 2, 1, -1, 3};
  const Builder build = [&](G& g, std::vector<Var>& v) {
    Var p = g.attention_probs(v[0], v[1], s, key_valid, false);
    Var ctx = g.attention_context(p, v[2], s);
    Var logits = g.matmul(ctx, v[3]);
    Var ce = g.cross_entropy_sum(logits, targets);
    Var cov = g.coverage_sum(p, s, query_valid);
    Var causal = g.attention_probs(v[0], v[0], AttentionShape{2, 2, 3, 3}, std::vector<char>(6, 1), true);
    Rng r(9);
    return g.combine(g.combine(ce, 1.0, cov, 0.7), 1.0, reduce(g, causal, r), 1.0);
  };
  CHECK(gradient_error(ps, build) < 1e-6);
}

TEST_CASE("attention: normalisation, masks and causality") {
  Rng rng(10);
  const AttentionShape s{2, 2, 4, 4};
  G g(false);
  std::vector<double> q(static_cast<std::size_t>(8 * 8)), k(q.size());
  for (auto& v : q) v = rng.normal();
  for (auto& v : k) v = rng.normal();
  const std::vector<char> valid = {1, 1, 1, 0, 1, 1, 0, 0};
  Var p = g.attention_probs(g.input(8, 8, q), g.input(8, 8, k), s, valid, true);
  const auto& pv = g.value(p);
  for (int b = 0; b < 2; ++b)
    for (int h = 0; h < 2; ++h)
      for (int i = 0; i < 4; ++i) {
        double sum = 0;
        for (int j = 0; j < 4; ++j) {
          const double a = pv[static_cast<std::size_t>(((b * 2 + h) * 4 + i) * 4 + j)];
          if (j > i || !valid[static_cast<std::size_t>(b * 4 + j)]) CHECK(a == 0.0);
          sum += a;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      }
}

TEST_CASE("coverage_sum: head-averaged See et al. formula") {
  // One head, two identical one-hot steps: the second step contributes 1.
  G g(false);
  const AttentionShape s{1, 1, 2, 3};
  Var p = g.input(2, 3, {0, 1, 0, 0, 1, 0});
  CHECK(g.scalar(g.coverage_sum(p, s, std::vector<char>{1, 1})) == doctest::Approx(1.0));
  // Two heads whose average is uniform over 4 keys, three steps: 0 + 1 + 1.
  const AttentionShape s2{1, 2, 3, 4};
  std::vector<double> rows;
  for (int h = 0; h < 2; ++h)
    for (int t = 0; t < 3; ++t)
      for (int j = 0; j < 4; ++j) rows.push_back(h == 0 ? (j < 2 ? 0.5 : 0.0) : (j < 2 ? 0.0 : 0.5));
  CHECK(g.scalar(g.coverage_sum(g.input(6, 4, rows), s2, std::vector<char>{1, 1, 1})) == doctest::Approx(2.0));
}

TEST_CASE("cross_entropy_sum: per-row values and ignored rows") {
  G g(false);
  std::vector<double> row_nll;
  Var logits = g.input(2, 3, {0, 0, 0, 1, 2, 3});
  Var ce = g.cross_entropy_sum(logits, std::vector<int>{1, -1}, &row_nll);
  CHECK(g.scalar(ce) == doctest::Approx(std::log(3.0)));
  CHECK(row_nll[1] == 0.0);
}

TEST_CASE("dropout: inverted scaling and identity without a generator") {
  G g(false);
  Var x = g.input(1, 1000, std::vector<double>(1000, 1.0));
  CHECK(g.dropout(x, 0.5, nullptr).id == x.id);
  Rng rng(12);
  Var y = g.dropout(x, 0.25, &rng);
  double sum = 0;
  for (double v : g.value(y)) {
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
    sum += v;
  }
  CHECK(sum / 1000 == doctest::Approx(1.0).epsilon(0.1));
}
