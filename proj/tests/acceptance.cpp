// Acceptance report: one PASS/FAIL line per criterion, with detail lines
// indented below. Exit status is 0 when the failing set equals the set given
// with --expect-fail (default: empty).

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "cg/classify.hpp"
#include "cg/oracle.hpp"
#include "cg/parse.hpp"
#include "cg/render.hpp"
#include "gen.hpp"
#include "obstruction_cases.hpp"

using namespace cg;
using Clock = std::chrono::steady_clock;

namespace {

Expr P(const std::string& s) { return parse(s); }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void detail(bool ok, const std::string& what) { std::cout << "    " << (ok ? "ok   " : "FAIL ") << what << "\n"; }

bool same_integral(const Expr& a, const Expr& b, int which, const Context& c) {
  return local_form(normalize(a - b, c), which, c).is_zero();
}

// Dirac algebra for GR in the given context; returns all-ok.
bool dirac(const Context& c, double* worst_seconds) {
  bool ok = true;
  auto timed = [&](const std::string& name, const std::function<bool()>& f) {
    auto t0 = Clock::now();
    bool r = f();
    double s = seconds_since(t0);
    *worst_seconds = std::max(*worst_seconds, s);
    std::ostringstream o;
    o << name << " (d=" << c.dim << (c.riemann_variation ? ", Riemann variation" : "") << ", " << s << " s)";
    detail(r && s < 60, o.str());
    ok = ok && r && s < 60;
  };
  timed("{H(N),H(M)} = H_a(g^ab (N nabla_b M - M nabla_b N))", [&] {
    Expr hh = poisson_bracket(make_constraint(gr_hamiltonian(), S::N, c), make_constraint(gr_hamiltonian(), S::M, c), c);
    auto rhs = make_constraint_with(momentum_constraint(), P("g[^a ^b]*(N*D(_b, M) - M*D(_b, N))"), c);
    return same_integral(hh, rhs.density, S::M, c);
  });
  timed("{H(N),H_a(xi)} = -H(xi^a nabla_a N)", [&] {
    Expr hv = poisson_bracket(make_constraint(gr_hamiltonian(), S::N, c), make_constraint(momentum_constraint(), S::xi, c), c);
    auto rhs = make_constraint_with(gr_hamiltonian(), P("-xi[^a]*D(_a, N)"), c);
    return same_integral(hv, rhs.density, S::N, c);
  });
  timed("{H_a(xi),H_a(eta)} = H_a([xi, eta])", [&] {
    Expr vv = poisson_bracket(make_constraint(momentum_constraint(), S::xi, c),
                              make_constraint(momentum_constraint(), S::eta, c), c);
    auto rhs = make_constraint_with(momentum_constraint(), P("xi[^b]*D(_b, eta[^a]) - eta[^b]*D(_b, xi[^a])"), c);
    return same_integral(vv, rhs.density, S::eta, c);
  });
  if (!c.riemann_variation) {
    timed("closure report on {H, H_a} is first-class", [&] {
      auto r = closure_report({gr_hamiltonian(), momentum_constraint()}, {}, c);
      return r.verdict == Verdict::first_class && !r.structure_functions.empty();
    });
  }
  return ok;
}

bool ultralocal(const Context& c) {
  bool a = antisymmetrized_bracket(kinetic_gr(), kinetic_gr(), S::f, S::h, c).is_zero();
  bool b = antisymmetrized_bracket(potential_gr(), potential_gr(), S::f, S::h, c).is_zero();
  detail(a, "{F_o(f), F_o(h)} = 0 (d=" + std::to_string(c.dim) + ")");
  detail(b, "{V(f), V(h)} = 0 (d=" + std::to_string(c.dim) + ")");
  return a && b;
}

Index I(const std::string& s) { return s[0] == '^' ? up(s.substr(1)) : dn(s.substr(1)); }
Expr special(SpecialKind k, std::initializer_list<const char*> b, int dim) {
  std::vector<Index> v;
  for (auto* s : b) v.push_back(I(s));
  return build_special(k, v, dim);
}

bool identities(const Context& c) {
  int d = c.dim;
  bool ok = true;
  auto check = [&](const std::string& name, const Expr& lhs, const Expr& rhs) {
    bool r = equal_normal(lhs, rhs, c);
    detail(r, name + " (d=" + std::to_string(d) + ")");
    ok = ok && r;
    return r;
  };
  // A0 on the trace reversal with 1/(d-1)
  check("A0 on the trace-reversed momentum",
        special(SpecialKind::A0, {"_k", "_l", "^i", "^j", "^l1", "^l2"}, d) *
            (P("pi[_i _j]") - Rational(1, d - 1) * P("g[_i _j]*pi[^p ^q]*g[_p _q]")),
        Rational(1, d - 1) * P("pi[^p ^q]*g[_p _q]*(g[^l1 ^l2]*g[_k _l] - 1/2*delta[^l1 _k]*delta[^l2 _l] - "
                               "1/2*delta[^l1 _l]*delta[^l2 _k])") +
            P("delta[^l2 _l]*pi[^l1 _k] + delta[^l2 _k]*pi[^l1 _l] - g[^l1 ^l2]*pi[_k _l]"));
  // Xi . pi has no trace terms
  check("Xi contracted with the momentum",
        special(SpecialKind::Xi, {"^l", "^i", "^j", "_k", "_a", "_b"}, d) * P("pi[_i _j]"),
        P("-delta[^l _k]*pi[_a _b] + delta[^l _b]*pi[_a _k] + delta[^l _a]*pi[_b _k]"));
  Expr x1 = special(SpecialKind::Xi, {"^n", "^i", "^j", "_k", "_e", "_f"}, d);
  Expr traceless = P("delta[^n _e]*pi[^c ^k]*pi[^d _k] + 1/2*(pi[^c ^n]*pi[^d _e] + pi[^d ^n]*pi[^c _e])"
                     " - 1/2*(g[^d ^n]*pi[^c ^k]*pi[_k _e] + g[^c ^n]*pi[^d ^k]*pi[_k _e])");
  check("Xi with two momenta, traceless part",
        Rational(1, 2) * (x1 * P("g[^k ^c]*pi[^d ^f]*pi[_i _j] + g[^k ^d]*pi[^c ^f]*pi[_i _j]")), traceless);
  Expr tr = P("pi[_i _j] - 1/2*g[_i _j]*pi[^p ^q]*g[_p _q]");
  check("Xi with two momenta, full form",
        Rational(1, 2) * (x1 * (P("g[^k ^c]*pi[^d ^f] + g[^k ^d]*pi[^c ^f]") * tr)),
        traceless + P("pi[^p ^q]*g[_p _q]*(-1/2*delta[^n _e]*pi[^c ^d] + 1/4*(g[^d ^n]*pi[^c _e] + g[^c ^n]*pi[^d _e])"
                      " - 1/4*(delta[^d _e]*pi[^c ^n] + delta[^c _e]*pi[^d ^n]))"));
  Expr lhs = Rational(1, 2) * (x1 * P("g[_i _j]*(g[^k ^c]*pi[^d ^f] + g[^k ^d]*pi[^c ^f])"));
  check("Xi with the metric and one momentum, coefficients -1, +1 on the symmetrized groups", lhs,
        P("delta[^n _e]*pi[^c ^d] - (g[^n ^c]*pi[^d _e] + g[^n ^d]*pi[^c _e])"
          " + (delta[^c _e]*pi[^d ^n] + delta[^d _e]*pi[^c ^n])"));
  bool corrected = equal_normal(lhs, P("delta[^n _e]*pi[^c ^d] - 1/2*(g[^n ^c]*pi[^d _e] + g[^n ^d]*pi[^c _e])"
                                       " + 1/2*(delta[^c _e]*pi[^d ^n] + delta[^d _e]*pi[^c ^n])"),
                                 c);
  std::cout << "    info  same identity with coefficients -1/2, +1/2: " << (corrected ? "holds" : "does not hold") << "\n";
  return ok;
}

bool criterion_4() {
  Context c;
  int matched = 0;
  bool ok = true;
  for (const auto& k : cgcases::obstruction_cases()) {
    auto t0 = Clock::now();
    ClosureOptions o;
    o.focus = k.focus;
    o.focus_name = k.family;
    auto r = closure_report(cgcases::case_specs(k), o, c);
    double s = seconds_since(t0);
    bool second = r.verdict == Verdict::second_class && !r.certificate.is_zero();
    std::string how;
    if (k.exact) {
      Expr E = project_if(reduce_weakly(k.expected(c), c).e, k.focus);
      auto lam = proportional(r.certificate, E, c);
      how = lam ? "certificate = " + lam->str() + " x named condition" : "certificate does not match named condition";
      if (second && lam && s < 600) ++matched;
    } else {
      how = "verdict only";
    }
    std::ostringstream o2;
    o2 << k.name << ": " << verdict_name(r.verdict) << ", " << how << " (" << s << " s)";
    detail(second && s < 600, o2.str());
    ok = ok && second && s < 600;
  }
  std::cout << "    " << matched << " cases with a certificate matching the named condition\n";
  return ok && matched >= 6;
}

bool criterion_5() {
  Context c;
  auto cg_ = check_linear_term_conditions(P("c*g[_a _b]"), c);
  detail(cg_.divfree && cg_.curlfree, "beta = c g_ab: divergence and curl conditions hold");
  auto rg = check_linear_term_conditions(P("R*g[_a _b]"), c);
  detail(!rg.divfree, "beta = R g_ab: divergence condition fails, residue " + render_text(rg.divergence));
  // numeric cross-check of the divergence
  bool numeric = true;
  Expr W = normalize(P("Ginv[^a ^b ^i1 ^i2]*R*g[_a _b]"), c);
  for (unsigned s = 1; s <= 5; ++s) {
    oracle::ChartConfig cfg;
    cfg.seed = s;
    oracle::Chart ch(cfg);
    auto sym = oracle::evaluate(rg.divergence, ch);
    oracle::FieldFn F = [&](const std::vector<double>& x) {
      oracle::Chart cc = ch;
      cc.set_point(x);
      return oracle::evaluate(W, cc);
    };
    auto D = oracle::fd_nabla(F, ch, dn("i2"), 0, 0.01);
    // contract the derivative axis (0) with W's ^i2 axis
    auto w0 = F(ch.point());
    std::size_t q = 0;
    for (std::size_t k = 0; k < w0.idx.size(); ++k)
      if (w0.idx[k].id == label("i2")) q = k + 1;
    int d = ch.dim();
    oracle::NumTensor div = sym;
    std::fill(div.data.begin(), div.data.end(), 0.0);
    std::size_t n = w0.data.size();
    for (int a = 0; a < d; ++a)
      for (std::size_t flat = 0; flat < n; ++flat) {
        std::size_t rem = flat;
        std::vector<int> ix(w0.idx.size());
        for (std::size_t k = w0.idx.size(); k-- > 0;) {
          ix[k] = static_cast<int>(rem % d);
          rem /= d;
        }
        if (ix[q - 1] != a) continue;
        div.data[ix[q == 1 ? 1 : 0]] += D.data[a * n + flat];
      }
    double rel = oracle::rel_diff(sym, div);
    numeric = numeric && rel < 1e-5;
    std::ostringstream o;
    o << "oracle divergence, seed " << s << ": rel " << rel;
    detail(rel < 1e-5, o.str());
    // c g_ab: Ginv^{ab i1 i2} c g_ab is covariantly constant
    auto cW = normalize(P("Ginv[^a ^b ^i1 ^i2]*c*g[_a _b]"), c);
    oracle::FieldFn Fc = [&](const std::vector<double>& x) {
      oracle::Chart cc = ch;
      cc.set_point(x);
      return oracle::evaluate(cW, cc);
    };
    double m = oracle::fd_nabla(Fc, ch, dn("i2"), 0, 0.01).max_abs();
    numeric = numeric && m < 1e-5;
  }
  return cg_.divfree && cg_.curlfree && !rg.divfree && numeric;
}

bool criterion_6() {
  Context c;
  std::mt19937 rng(2024);
  const std::vector<int> pool{S::pi, S::pi, S::g, S::Ricci, S::R, S::Riem};
  int nonzero = 0, violations = 0, total = 0;
  while (nonzero < 200) {
    auto make = [&](int smear) {
      Term t = cgtest::random_term(rng, pool, 1 + static_cast<int>(rng() % 2), 1, 0);
      t.wpow = 1 - momentum_power(t);
      t.f.push_back(fac(smear, {}));
      return t;
    };
    Term ta = make(S::f), tb = make(S::h);
    int p = momentum_power(ta), q = momentum_power(tb);
    int deg = derivative_degree(ta) + derivative_degree(tb);
    Expr out = poisson_bracket({Expr(ta), S::f, "A"}, {Expr(tb), S::h, "B"}, c);
    ++total;
    if (!out.is_zero()) ++nonzero;
    for (const auto& t : out.terms) violations += momentum_power(t) != p + q - 1 || derivative_degree(t) != deg;
  }
  std::cout << "    " << nonzero << " nonzero brackets (" << total << " drawn), " << violations << " violations\n";
  return violations == 0;
}

bool criterion_7() {
  using namespace oracle;
  Context c;
  auto t0 = Clock::now();
  bool ok = true;
  const std::vector<double> e{1, 0.3, 0, 0.3, 0.5, -0.2, 0, -0.2, 0.7};
  struct Item {
    std::string name;
    std::function<double(const Chart&)> rel;
    double tol;
  };
  std::vector<Item> items{
      {"[nabla_a, nabla_b] V^c = Riem^c_dab V^d",
       [](const Chart& ch) {
         return rel_diff(evaluate(P("D(_a, D(_b, V[^c])) - D(_b, D(_a, V[^c]))"), ch),
                         evaluate(P("Riem[^c _d _a _b]*V[^d]"), ch));
       },
       1e-6},
      {"nested finite differences vs jets",
       [](const Chart& ch) {
         return rel_diff(fd_nabla_chain(P("V[^c]"), {dn("a"), dn("b")}, ch, 0, 0.01),
                         evaluate(P("D(_a, D(_b, V[^c]))"), ch));
       },
       1e-6},
      {"dF/dg for f sqrt g",
       [&](const Chart& ch) {
         return fd_functional_derivative({P("f*sqrtg"), S::f, "F"}, ch, Wrt::metric, trig_bump(ch.point(), 4), e, c, 16).rel;
       },
       1e-6},
      {"dF/dg for f sqrt g R",
       [&](const Chart& ch) {
         return fd_functional_derivative({P("f*sqrtg*R"), S::f, "F"}, ch, Wrt::metric, trig_bump(ch.point(), 4), e, c, 16)
             .rel;
       },
       1e-4},
      {"dF/dpi for the kinetic term",
       [&](const Chart& ch) {
         return fd_functional_derivative({P("f*isqrtg*G[_a _b _c _d]*pi[^a ^b]*pi[^c ^d]"), S::f, "F"}, ch, Wrt::momentum,
                                         trig_bump(ch.point(), 4), e, c, 16)
             .rel;
       },
       1e-6},
  };
  for (const auto& it : items) {
    double worst = 0;
    for (unsigned s = 1; s <= 5; ++s) {
      ChartConfig cfg;
      cfg.seed = s;
      worst = std::max(worst, it.rel(Chart(cfg)));
    }
    std::ostringstream o;
    o << it.name << ": worst rel " << worst << " over 5 seeds (tol " << it.tol << ")";
    detail(worst < it.tol, o.str());
    ok = ok && worst < it.tol;
  }
  // weak reduction on transverse momenta
  double worst = 0;
  for (unsigned s = 1; s <= 5; ++s) {
    ChartConfig cfg;
    cfg.seed = s;
    cfg.transverse = true;
    Chart ch(cfg);
    Expr x = normalize(P("f*D(_c, D(_a, D(_b, pi[^a ^b])))*V[^c] + D(_a, D(_b, pi[^c ^d]))*D(_c, D(_d, pi[^a ^b]))*f"), c);
    auto r = reduce_weakly(x, c);
    double a = evaluate(x, ch).scalar(), b = r.e.is_zero() ? 0.0 : evaluate(r.e, ch).scalar();
    worst = std::max(worst, std::fabs(a - b) / std::max(1.0, std::fabs(a)));
  }
  std::ostringstream wo;
  wo << "weak reduction on transverse momenta: worst rel " << worst << " over 5 seeds";
  detail(worst < 1e-5, wo.str());
  ok = ok && worst < 1e-5;
  double s = seconds_since(t0);
  detail(s < 300, "oracle suite time " + std::to_string(s) + " s");
  return ok && s < 300;
}

bool criterion_9() {
  Context c5;
  c5.dim = 5;
  std::ifstream in(std::string(CG_DATA_DIR) + "/gb_hamiltonian.expr");
  std::stringstream ss;
  ss << in.rdbuf();
  Expr e = normalize(parse(ss.str()), c5);
  std::set<int> powers;
  for (const auto& b : classify(e)) powers.insert(b.key.pi_power);
  std::ostringstream o;
  o << "momentum powers:";
  for (int p : powers) o << " " << p;
  detail(powers == std::set<int>{0, 2, 4}, o.str());
  return powers == std::set<int>{0, 2, 4};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance report"};
  std::vector<int> expect_fail;
  app.add_option("--expect-fail", expect_fail, "criteria known to fail");
  CLI11_PARSE(app, argc, argv);

  std::set<int> failed;
  auto run = [&](int n, const std::string& title, const std::function<bool()>& f) {
    std::cout << "criterion " << n << ": " << title << "\n";
    bool ok = f();
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << n << ": " << title << "\n" << std::flush;
    if (!ok) failed.insert(n);
  };

  run(1, "Dirac algebra, exact", [] {
    Context c;
    double worst = 0;
    return dirac(c, &worst);
  });
  run(2, "ultralocal self-brackets vanish", [] { return ultralocal(Context{}); });
  run(3, "special-tensor identities", [] { return identities(Context{}); });
  run(4, "obstruction regression suite", criterion_4);
  run(5, "linear-term conditions", criterion_5);
  run(6, "grading laws on random brackets", criterion_6);
  run(7, "oracle agreement", criterion_7);
  run(8, "dimensions 4 and 5 with Riemann variation", [] {
    bool ok = true;
    for (int d : {4, 5}) {
      Context c;
      c.dim = d;
      c.riemann_variation = true;
      double worst = 0;
      ok = dirac(c, &worst) && ok;
      ok = ultralocal(c) && ok;
      ok = identities(c) && ok;
    }
    return ok;
  });
  run(9, "Gauss-Bonnet constraint buckets", criterion_9);

  std::set<int> expected(expect_fail.begin(), expect_fail.end());
  std::cout << "summary: " << 9 - failed.size() << "/9 criteria pass";
  if (!failed.empty()) {
    std::cout << "; failing:";
    for (int n : failed) std::cout << " " << n;
  }
  std::cout << "\n";
  return failed == expected ? 0 : 1;
}
