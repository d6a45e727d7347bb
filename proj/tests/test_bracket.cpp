#include "doctest.h"

#include <random>

#include "cg/bracket.hpp"
#include "cg/parse.hpp"
#include "cg/render.hpp"
#include "gen.hpp"

using namespace cg;

namespace {
Context ctx3;
Expr P(const std::string& s) { return parse(s); }

// Equality of two integrands modulo total derivatives, via the local form on `which`.
bool same_integral(const Expr& a, const Expr& b, int which, const Context& c = ctx3, const std::string& fl = "a") {
  return local_form(normalize(a - b, c), which, c, fl).is_zero();
}
}  // namespace

TEST_CASE("ultralocal kinetic and potential terms commute with themselves") {
  for (int d : {3, 4, 5}) {
    Context c;
    c.dim = d;
    CHECK(antisymmetrized_bracket(kinetic_gr(), kinetic_gr(), S::f, S::h, c).is_zero());
    CHECK(antisymmetrized_bracket(potential_gr(), potential_gr(), S::f, S::h, c).is_zero());
    CHECK(poisson_bracket(make_constraint(kinetic_gr(), S::f, c), make_constraint(kinetic_gr(), S::h, c), c).is_zero());
  }
}

TEST_CASE("bracket is antisymmetric") {
  std::vector<ConstraintSpec> specs{gr_hamiltonian(), kinetic_gr(), potential_gr(),
                                    kinetic_mod(P("R*isqrtg*G[_a _b _c _d]"), 0, 0)};
  for (const auto& A : specs)
    for (const auto& B : specs) {
      auto Af = make_constraint(A, S::f, ctx3);
      auto Bh = make_constraint(B, S::h, ctx3);
      Expr ab = poisson_bracket(Af, Bh, ctx3);
      Expr ba = poisson_bracket(Bh, Af, ctx3);
      CHECK(same_integral(ab, -ba, S::h));
    }
  // same smearing on both sides
  CHECK(antisymmetrized_bracket(gr_hamiltonian(), gr_hamiltonian(), S::f, S::f, ctx3).is_zero());
}

TEST_CASE("momentum constraint drags the metric") {
  // {int W^ab g_ab, H_a(xi)} = int W^ab (nabla_a xi_b + nabla_b xi_a)
  SmearedFunctional F{P("W[^a ^b]*g[_a _b]"), S::f, "Wg"};
  auto H = make_constraint(momentum_constraint(), S::xi, ctx3);
  Expr br = poisson_bracket(F, H, ctx3);
  CHECK(same_integral(br, P("W[^a ^b]*D(_a, xi[_b]) + W[^a ^b]*D(_b, xi[_a])"), S::xi));
  CHECK(same_integral(poisson_bracket(H, F, ctx3), P("-2*W[^a ^b]*D(_a, xi[_b])"), S::xi));
}

TEST_CASE("Dirac algebra") {
  for (int d : {3, 4, 5}) {
    Context c;
    c.dim = d;
    for (bool riem : {false, true}) {
      c.riemann_variation = riem;
      CAPTURE(d);
      CAPTURE(riem);
      // {H(f), H(h)} = H_a(g^ab (f nabla_b h - h nabla_b f))
      Expr hh = poisson_bracket(make_constraint(gr_hamiltonian(), S::f, c), make_constraint(gr_hamiltonian(), S::h, c), c);
      auto rhs1 = make_constraint_with(momentum_constraint(), P("g[^a ^b]*(f*D(_b, h) - h*D(_b, f))"), c);
      CHECK(same_integral(hh, rhs1.density, S::h, c));
      // {H(f), H_a(xi)} = -H(xi^a nabla_a f)
      Expr hv = poisson_bracket(make_constraint(gr_hamiltonian(), S::f, c),
                                make_constraint(momentum_constraint(), S::xi, c), c);
      auto rhs2 = make_constraint_with(gr_hamiltonian(), P("-xi[^a]*D(_a, f)"), c);
      CHECK(same_integral(hv, rhs2.density, S::f, c));
      // {H_a(xi), H_a(eta)} = H_a([xi, eta])
      Expr vv = poisson_bracket(make_constraint(momentum_constraint(), S::xi, c),
                                make_constraint(momentum_constraint(), S::eta, c), c);
      auto rhs3 =
          make_constraint_with(momentum_constraint(), P("xi[^b]*D(_b, eta[^a]) - eta[^b]*D(_b, xi[^a])"), c);
      CHECK(same_integral(vv, rhs3.density, S::eta, c));
    }
  }
}

TEST_CASE("Jacobi identity for one scalar and two vector generators") {
  auto H = make_constraint(gr_hamiltonian(), S::N, ctx3);
  auto X = make_constraint(momentum_constraint(), S::xi, ctx3);
  auto Y = make_constraint(momentum_constraint(), S::eta, ctx3);
  auto br = [&](const SmearedFunctional& a, const SmearedFunctional& b) {
    return SmearedFunctional{poisson_bracket(a, b, ctx3), S::f, "nested"};
  };
  Expr cyc = poisson_bracket(br(H, X), Y, ctx3) + poisson_bracket(br(X, Y), H, ctx3) + poisson_bracket(br(Y, H), X, ctx3);
  CHECK_FALSE(poisson_bracket(br(H, X), Y, ctx3).is_zero());
  CHECK(local_form(normalize(cyc, ctx3), S::N, ctx3).is_zero());
}

TEST_CASE("grading laws on random brackets") {
  std::mt19937 rng(2024);
  const std::vector<int> pool{S::pi, S::pi, S::g, S::Ricci, S::R, S::Riem};
  int checked = 0, nonzero = 0, violations = 0;
  while (nonzero < 200) {
    auto make = [&](int smear) {
      Term t = cgtest::random_term(rng, pool, 1 + static_cast<int>(rng() % 2), 1, 0);
      int p = momentum_power(t);
      t.wpow = 1 - p;
      t.f.push_back(fac(smear, {}));
      return std::pair{SmearedFunctional{Expr(t), smear, "r"}, t};
    };
    auto [A, ta] = make(S::f);
    auto [B, tb] = make(S::h);
    int p = momentum_power(ta), q = momentum_power(tb);
    int deg = derivative_degree(ta) + derivative_degree(tb);
    Expr out = poisson_bracket(A, B, ctx3);
    ++checked;
    if (!out.is_zero()) ++nonzero;
    for (const auto& t : out.terms)
      if (momentum_power(t) != p + q - 1 || derivative_degree(t) != deg) ++violations;
  }
  CHECK(violations == 0);
  CHECK(checked < 1000);
}
