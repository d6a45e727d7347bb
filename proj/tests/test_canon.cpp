#include "doctest.h"

#include "cg/canon.hpp"
#include "cg/parse.hpp"
#include "cg/render.hpp"

using namespace cg;

namespace {
Expr canon(const std::string& s, int dim = 3) { return simplify_metric(parse(s), dim); }
bool eq(const std::string& a, const std::string& b, int dim = 3) { return equal(parse(a), parse(b), dim); }
}  // namespace

TEST_CASE("symmetric momentum and dummy relabeling") {
  CHECK(eq("pi[^b ^a]*g[_a _b]", "g[_a _b]*pi[^a ^b]"));
  CHECK(canon("pi[^a ^b] - pi[^b ^a]").is_zero());
  CHECK(canon("pi[^c ^d]*g[_c _d] - pi[^a ^b]*g[_a _b]").is_zero());
}

TEST_CASE("antisymmetric times symmetric vanishes") {
  CHECK(canon("A[^a ^b]*S[_a _b]").is_zero());
  CHECK_FALSE(canon("A[^a ^b]*T[_a _b]").is_zero());
}

TEST_CASE("relabeled DeWitt contractions agree") {
  CHECK(eq("G[_a _b _c _d]*pi[^a ^b]*pi[^c ^d]", "G[_c _d _a _b]*pi[^c ^d]*pi[^a ^b]"));
  CHECK(eq("pi[^a ^b]", "pi[^b ^a]"));
  CHECK_FALSE(eq("pi[^a ^b]*pi[_a _b]", "pi[^a ^b]*g[_a _b]*pi[^c ^d]*g[_c _d]"));
}

TEST_CASE("metric contraction") {
  CHECK(eq("g[_a _b]*ginv[^b ^c]", "delta[_a ^c]"));
  CHECK(eq("delta[_a ^a]", "3"));
  CHECK(eq("delta[_a ^a]", "4", 4));
  CHECK(eq("delta[_a ^b]*pi[^a ^c]", "pi[^b ^c]"));
  CHECK(eq("dim*pi[^a ^b]*g[_a _b]", "delta[_c ^c]*pi[^a ^b]*g[_a _b]"));
}

TEST_CASE("Riemann pair symmetries") {
  CHECK(canon("Riem[^a _b _c _d] + Riem[^a _b _d _c]").is_zero());
  CHECK(canon("Riem[^a _b _c _d]*g[_a _e] - Riem[^a _d _e _b]*g[_a _c]").is_zero());
  CHECK(canon("Riem[^a _b _c _d]*Riem[^b _a _e _f]*A[^c ^d]*A[^e ^f] + Riem[^a _b _c _d]*Riem[^b _a _e _f]*A[^e ^f]*A[^c ^d]").size() == 1);
}

TEST_CASE("derivative prefix symmetry for scalars") {
  CHECK(canon("D(_a, D(_b, R)) - D(_b, D(_a, R))").is_zero());
  CHECK_FALSE(canon("D(_a, D(_b, V[^c])) - D(_b, D(_a, V[^c]))").is_zero());
}

TEST_CASE("text round trip") {
  for (const char* s : {"pi[^a ^b]*g[_a _b]", "D(_i, pi[^a ^b])", "R*G[_a _b _c _d]*pi[^a ^b]*pi[^c ^d]",
                        "3/2*isqrtg*D(_i, D(_j, Ricci[_k _l]))*pi[^k ^l]*dg[^i ^j]",
                        "-1/3*dim*Riem[^a _b _c _d]*Riem[^b _a ^c ^d] + 2*Lambda*sqrtg"}) {
    Expr e = canon(s);
    Expr back = parse(render_text(e));
    CHECK(equal(e, back));
    CHECK(equal(e, from_json(to_json(e))));
  }
}

TEST_CASE("parse diagnostics") {
  auto code = [](const std::string& s) {
    try {
      parse(s);
    } catch (const ParseError& e) {
      return e.code;
    }
    return ParseCode::structure;
  };
  CHECK(code("pi[^a ^b") == ParseCode::syntax);
  CHECK(code("foo[^a]") == ParseCode::unknown_symbol);
  CHECK(code("pi[^a]") == ParseCode::arity);
}

#include <random>

#include "gen.hpp"

TEST_CASE("canonical form is invariant under relabeling, symmetry and factor order") {
  std::mt19937 rng(12345);
  std::vector<int> pool{S::pi, S::Riem, S::Ricci, S::R, S::Sym, S::A, S::T, S::V, S::xi, S::u, S::phi};
  int checked = 0;
  for (int it = 0; it < 400; ++it) {
    Term t = cgtest::random_term(rng, pool, 2 + static_cast<int>(rng() % 3), 1, static_cast<int>(rng() % 3));
    Expr a = simplify_metric(Expr(t));
    for (int r = 0; r < 3; ++r) {
      Expr b = simplify_metric(Expr(cgtest::scramble(rng, t)));
      CHECK(identical(a, b));
      ++checked;
    }
  }
  CHECK(checked == 1200);
}

TEST_CASE("canonicalization is idempotent") {
  std::mt19937 rng(99);
  std::vector<int> pool{S::pi, S::Riem, S::Sym, S::A, S::V, S::g};
  for (int it = 0; it < 200; ++it) {
    Expr a = simplify_metric(Expr(cgtest::random_term(rng, pool, 3, 2, static_cast<int>(rng() % 2) * 2)));
    CHECK(identical(simplify_metric(a), a));
  }
}
