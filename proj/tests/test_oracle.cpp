#include "doctest.h"

#include <cmath>
#include <random>

#include "cg/classify.hpp"
#include "cg/oracle.hpp"
#include "cg/parse.hpp"
#include "cg/render.hpp"
#include "gen.hpp"

using namespace cg;
using namespace cg::oracle;

namespace {
Context ctx3;
Expr P(const std::string& s) { return parse(s); }

Chart chart(unsigned seed, bool transverse = false, int dim = 3) {
  ChartConfig c;
  c.seed = seed;
  c.transverse = transverse;
  c.dim = dim;
  return Chart(c);
}

// Sums axes p and q of t (one index up, one down).
NumTensor trace(const NumTensor& t, std::size_t p, std::size_t q) {
  int d = t.dim;
  std::size_t r = t.idx.size();
  NumTensor out;
  out.dim = d;
  for (std::size_t k = 0; k < r; ++k)
    if (k != p && k != q) out.idx.push_back(t.idx[k]);
  std::size_t n = 1;
  for (std::size_t k = 0; k < out.idx.size(); ++k) n *= d;
  out.data.assign(n, 0.0);
  std::vector<int> ix(r);
  for (std::size_t flat = 0; flat < t.data.size(); ++flat) {
    std::size_t rem = flat;
    for (std::size_t k = r; k-- > 0;) {
      ix[k] = static_cast<int>(rem % d);
      rem /= d;
    }
    if (ix[p] != ix[q]) continue;
    std::size_t o = 0;
    for (std::size_t k = 0; k < r; ++k)
      if (k != p && k != q) o = o * d + ix[k];
    out.data[o] += t.data[flat];
  }
  return out;
}

std::size_t axis(const NumTensor& t, const std::string& name) {
  for (std::size_t k = 0; k < t.idx.size(); ++k)
    if (t.idx[k].id == label(name)) return k;
  FAIL("missing axis " << name);
  return 0;
}

const std::vector<double> kBumpDir{1, 0.3, 0, 0.3, 0.5, -0.2, 0, -0.2, 0.7};
}  // namespace

TEST_CASE("trace of the identity") {
  for (unsigned s = 1; s <= 5; ++s) CHECK(evaluate(P("g[^a _a]"), chart(s)).scalar() == doctest::Approx(3).epsilon(1e-12));
  CHECK(evaluate(P("g[^a _a]"), chart(1, false, 5)).scalar() == doctest::Approx(5).epsilon(1e-12));
}

TEST_CASE("flat chart has no curvature") {
  ChartConfig c;
  c.amplitude = 0;
  Chart ch(c);
  CHECK(evaluate(P("Ricci[_k _l]"), ch).max_abs() < 1e-10);
  CHECK(std::fabs(evaluate(P("R"), ch).scalar()) < 1e-10);
}

TEST_CASE("chart config round trip") {
  ChartConfig c;
  c.dim = 4;
  c.seed = 9;
  c.stencil_order = 6;
  auto back = chart_config_from_json(chart_config_to_json(c));
  CHECK(back.dim == 4);
  CHECK(back.seed == 9);
  CHECK(back.stencil_order == 6);
  CHECK_THROWS_AS(chart_config_from_json({{"stencil_order", 3}}), OracleError);
}

TEST_CASE("metric samples are positive definite") {
  for (unsigned s = 1; s <= 5; ++s) CHECK(chart(s).metric_positive(50, s));
}

TEST_CASE("derivative commutator matches the Riemann tensor on two code paths") {
  for (unsigned s = 1; s <= 5; ++s) {
    CAPTURE(s);
    Chart ch = chart(s);
    auto rhs = evaluate(P("Riem[^c _d _a _b]*V[^d]"), ch);
    REQUIRE(rhs.max_abs() > 1e-3);
    auto lhs_jet = evaluate(P("D(_a, D(_b, V[^c])) - D(_b, D(_a, V[^c]))"), ch);
    CHECK(rel_diff(lhs_jet, rhs) < 1e-6);
    // nested finite differences
    auto ab = fd_nabla_chain(P("V[^c]"), {dn("a"), dn("b")}, ch, 0, 0.01);
    auto ba = fd_nabla_chain(P("V[^c]"), {dn("b"), dn("a")}, ch, 0, 0.01);
    auto jab = evaluate(P("D(_a, D(_b, V[^c]))"), ch);
    CHECK(rel_diff(ab, jab) < 1e-6);
    // ba has axes (b, a, c): swap the first two to line up with (a, b, c)
    NumTensor comm = ab;
    int d = ch.dim();
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        for (int c = 0; c < d; ++c) comm.data[(a * d + b) * d + c] -= ba.data[(b * d + a) * d + c];
    CHECK(rel_diff(comm, rhs) < 1e-6);
    // Riemann from the Christoffel formula
    auto Rf = riemann_formula(ch);
    auto Rj = evaluate(P("Riem[^a _b _c _d]"), ch);
    double m = 0;
    for (std::size_t k = 0; k < Rf.size(); ++k) m = std::max(m, std::fabs(Rf[k] - Rj.data[k]));
    CHECK(m < 1e-10);
  }
}

TEST_CASE("finite differences converge at the stencil order") {
  Chart ch = chart(3);
  auto exact = evaluate(P("D(_a, u[_b _c])"), ch);
  for (int order : {2, 4}) {
    ChartConfig c = ch.config();
    c.stencil_order = order;
    Chart cc(c);
    double e1 = rel_diff(fd_nabla_chain(P("u[_b _c]"), {dn("a")}, cc, 0, 0.08), exact);
    double e2 = rel_diff(fd_nabla_chain(P("u[_b _c]"), {dn("a")}, cc, 0, 0.04), exact);
    double expect = std::pow(2.0, order);
    CAPTURE(order);
    CHECK(e1 / e2 > 0.8 * expect);
    CHECK(e1 / e2 < 1.2 * expect);
  }
}

TEST_CASE("densities are differentiated with their weight") {
  Chart ch = chart(2);
  auto jet = evaluate(P("D(_a, pi[^b ^c])"), ch);
  auto fd = fd_nabla_chain(P("pi[^b ^c]"), {dn("a")}, ch, 1, 0.01);
  CHECK(rel_diff(jet, fd) < 1e-6);
}

TEST_CASE("contracted Bianchi identity holds numerically") {
  for (unsigned s = 1; s <= 5; ++s) {
    Chart ch = chart(s);
    CHECK(rel_diff(evaluate(P("D(^a, Ricci[_a _b])"), ch), evaluate(P("1/2*D(_b, R)"), ch)) < 1e-9);
  }
}

TEST_CASE("normalization preserves values") {
  std::mt19937 rng(11);
  const std::vector<int> pool{S::pi, S::g, S::Ricci, S::R, S::Riem, S::V, S::u, S::f};
  int checked = 0;
  std::vector<Chart> charts;
  for (unsigned s = 1; s <= 5; ++s) charts.push_back(chart(s));
  while (checked < 100) {
    int nfree = static_cast<int>(rng() % 3);
    Term t = cgtest::random_term(rng, pool, 1 + static_cast<int>(rng() % 3), 2, nfree);
    Expr e(t);
    Expr n = normalize(e, ctx3);
    const Chart& ch = charts[checked % charts.size()];
    auto a = evaluate(e, ch);
    if (n.is_zero()) {
      CHECK(a.max_abs() < 1e-9 * (1 + std::fabs(t.c.to_double())));
    } else {
      auto b = evaluate(n, ch);
      CAPTURE(render_text(e));
      CHECK(rel_diff(a, b) < 1e-9);
    }
    ++checked;
  }
}

TEST_CASE("derivative reordering is exact") {
  std::mt19937 rng(5);
  const std::vector<std::string> src{"D(_a, D(_b, D(_c, V[^d])))", "D(_c, D(_a, u[_b _d]))",
                                     "D(_b, D(_a, D(_c, pi[^a ^b])))", "D(_d, D(_c, Ricci[_a _b]))"};
  int n = 0;
  for (unsigned s = 1; s <= 20; ++s) {
    Chart ch = chart(s);
    for (const auto& x : src) {
      Expr e = P(x);
      Expr c = commute_to_order(e.terms[0], OrderPolicy::canonical, ctx3);
      Expr dv = commute_to_order(e.terms[0], OrderPolicy::divergence_exposing, ctx3);
      auto a = evaluate(e, ch);
      CHECK(rel_diff(a, evaluate(c, ch)) < 1e-9);
      CHECK(rel_diff(a, evaluate(dv, ch)) < 1e-9);
      ++n;
    }
  }
  CHECK(n >= 20);
}

TEST_CASE("functional derivatives agree with finite differences") {
  struct Case {
    std::string density;
    Wrt wrt;
    double tol;
  };
  const std::vector<Case> cases{{"f*sqrtg", Wrt::metric, 1e-6},
                                {"f*sqrtg*R", Wrt::metric, 1e-4},
                                {"f*isqrtg*G[_a _b _c _d]*pi[^a ^b]*pi[^c ^d]", Wrt::momentum, 1e-6}};
  for (const auto& c : cases)
    for (unsigned s = 1; s <= 5; ++s) {
      CAPTURE(c.density);
      CAPTURE(s);
      Chart ch = chart(s);
      SmearedFunctional F{P(c.density), S::f, "F"};
      auto r = fd_functional_derivative(F, ch, c.wrt, trig_bump(ch.point(), 4), kBumpDir, ctx3, 16);
      CHECK(std::fabs(r.kernel) > 1e-6);
      CHECK(r.rel < c.tol);
    }
}

TEST_CASE("functional derivatives of random functionals") {
  std::mt19937 rng(3);
  const std::vector<int> pool{S::pi, S::g, S::Ricci, S::R};
  int done = 0;
  while (done < 10) {
    // undifferentiated factors keep the integrand resolvable on a 16^3 grid
    Term t = cgtest::random_term(rng, pool, 1 + static_cast<int>(rng() % 2), 0, 0);
    t.wpow = 1 - momentum_power(t);
    t.f.push_back(fac(S::f, {}));
    Expr dens = normalize(Expr(t), ctx3);
    if (dens.is_zero()) continue;
    Chart ch = chart(100 + done);
    SmearedFunctional F{dens, S::f, "F"};
    Wrt w = (momentum_power(t) > 0 && done % 2) ? Wrt::momentum : Wrt::metric;
    CAPTURE(render_text(dens));
    auto r = fd_functional_derivative(F, ch, w, trig_bump(ch.point(), 4), kBumpDir, ctx3, 16);
    CHECK(r.rel < 1e-4);
    ++done;
  }
}

TEST_CASE("weak reduction is sound on transverse momenta") {
  const std::vector<std::string> src{
      "f*D(_a, D(_b, pi[^a ^c]))*D(_c, R)",
      "f*D(_c, D(_a, D(_b, pi[^a ^b])))*V[^c]",
      "D(_e, D(_d, pi[^c ^d]))*D(_c, D(^e, pi[^a ^b]))*u[_a _b]",
      "D(_a, D(_b, pi[^c ^d]))*D(_c, D(_d, pi[^a ^b]))*f",
      // terms needing different expansion orders see the same momentum field
      "f*D(_c, D(_a, D(_b, pi[^a ^b])))*V[^c] + D(_a, D(_b, pi[^c ^d]))*D(_c, D(_d, pi[^a ^b]))*f",
  };
  for (unsigned s = 1; s <= 5; ++s) {
    Chart ch = chart(s, true);
    REQUIRE(evaluate(P("D(_b, pi[^a ^b])"), ch).max_abs() < 1e-8);
    for (const auto& x : src) {
      CAPTURE(x);
      Expr e = normalize(P(x), ctx3);
      auto r = reduce_weakly(e, ctx3);
      auto a = evaluate(e, ch), b = evaluate(r.e, ch);
      double scale = std::max(1.0, a.max_abs());
      double diff = 0;
      for (std::size_t k = 0; k < a.data.size(); ++k) diff = std::max(diff, std::fabs(a.data[k] - (r.e.is_zero() ? 0 : b.data[k])));
      CHECK(diff / scale < 1e-5);
    }
  }
}

TEST_CASE("divergence condition cross-check") {
  auto rep = check_linear_term_conditions(P("R*g[_a _b]"), ctx3);
  REQUIRE_FALSE(rep.divergence.is_zero());
  Expr W = normalize(P("Ginv[^a ^b ^i1 ^i2]*R*g[_a _b]"), ctx3);
  for (unsigned s = 1; s <= 5; ++s) {
    Chart ch = chart(s);
    auto sym = evaluate(rep.divergence, ch);
    FieldFn F = [&](const std::vector<double>& x) {
      Chart c = ch;
      c.set_point(x);
      return evaluate(W, c);
    };
    NumTensor d = fd_nabla(F, ch, dn("i2"), 0, 0.01);
    NumTensor div = trace(d, 0, 1 + axis(F(ch.point()), "i2"));
    CHECK(rel_diff(sym, div) < 1e-5);
  }
}
