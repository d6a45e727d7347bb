#include "cg/variation.hpp"

namespace cg {

namespace {

Index fr(bool up) { return Index{fresh_label(), up}; }
Expr G2(Index a, Index b) { return metric(a, b); }
Expr one(Factor F) { return ex({std::move(F)}); }

// (1/2)(X(p,q) + X(q,p)) for a builder X
template <class Fn>
Expr symm(Fn x, Index p, Index q) {
  return Rational(1, 2) * (x(p, q) + x(q, p));
}

Expr xi(Index l, Index i, Index j, Index c, Index a, Index b) {
  auto dd = [](Index p, Index q, Index r, Index s) {
    return symm([&](Index u, Index v) { return G2(p, u) * G2(q, v); }, r, s);
  };
  // dd(a,b,i,j) = delta_a^(i delta_b^j)
  return G2(l, a) * dd(b, c, i, j) + G2(l, b) * dd(a, c, i, j) - G2(l, c) * dd(a, b, i, j);
}

Expr ricci_mixed(Index k, Index kp) { return one(fac(S::Ricci, {k, kp})); }

Expr build_raw(SpecialKind kind, const std::vector<Index>& v, int dim) {
  switch (kind) {
    case SpecialKind::Xi:
      return xi(v[0], v[1], v[2], v[3], v[4], v[5]);
    case SpecialKind::A0: {
      Index k = v[0], l = v[1], i = v[2], j = v[3], l1 = v[4], l2 = v[5];
      Index kp = fr(false);
      Expr first = G2(l1, flip(kp)) * xi(l2, i, j, kp, k, l);
      Index k1 = fr(false), k2 = fr(false);
      Expr trace = G2(flip(k1), flip(k2)) *
                   symm([&](Index p, Index q) { return xi(l2, i, j, k1, k2, p) * G2(l1, q); }, k, l);
      return first - trace;
    }
    case SpecialKind::A1: {
      Index a1 = v[0], k = v[1], l = v[2], i = v[3], j = v[4], lp = v[5];
      Index p = fr(true), q = fr(true);
      return ricci_mixed(k, p) * xi(lp, i, j, flip(p), l, a1) + ricci_mixed(l, q) * xi(lp, i, j, flip(q), k, a1);
    }
    case SpecialKind::A2: {
      Index a1 = v[0], a2 = v[1], k = v[2], l = v[3], i = v[4], j = v[5], lp = v[6];
      auto dric = [](Index d, Index x, Index y) { return one(fac(S::Ricci, {x, y}, {d})); };
      Index p0 = fr(true);
      Expr out = dric(p0, k, l) * xi(lp, i, j, flip(p0), a1, a2);
      Index p1 = fr(true), p2 = fr(true), p3 = fr(true), p4 = fr(true);
      out += dric(a1, k, p1) * xi(lp, i, j, flip(p1), l, a2);
      out += dric(a1, l, p2) * xi(lp, i, j, flip(p2), k, a2);
      out += dric(a2, k, p3) * xi(lp, i, j, flip(p3), l, a1);
      out += dric(a2, l, p4) * xi(lp, i, j, flip(p4), k, a1);
      return out;
    }
    case SpecialKind::F0: {
      Index h = v[0], l1 = v[1], i = v[2], j = v[3], l2 = v[4], e = v[5], f = v[6], g = v[7];
      Index p = fr(false);
      Expr anti = Rational(1, 2) * (xi(l1, i, j, p, e, f) * G2(l2, g) - xi(l1, i, j, p, e, g) * G2(l2, f));
      return G2(h, flip(p)) * anti;
    }
    case SpecialKind::DeWitt:
    case SpecialKind::DeWittInverse: {
      Index a = v[0], b = v[1], c = v[2], d = v[3];
      Expr sym_part = Rational(1, 2) * (G2(a, c) * G2(b, d) + G2(a, d) * G2(b, c));
      if (kind == SpecialKind::DeWittInverse) return sym_part - G2(a, b) * G2(c, d);
      if (dim < 2) throw std::invalid_argument("DeWitt supermetric needs a dimension of at least 2");
      return sym_part - Rational(1, dim - 1) * (G2(a, b) * G2(c, d));
    }
  }
  return {};
}

// Converts prefixes to down indices and slots to natural variance by inserting metrics.
Term naturalize(const Term& t) {
  Term out = t;
  std::vector<Factor> extra;
  for (auto& F : out.f) {
    if (F.sym == S::g) continue;
    for (auto& x : F.d)
      if (x.up) {
        Index q = fr(false);
        extra.push_back(fac(S::g, {x, flip(q)}));
        x = q;
      }
    const auto& nat = sym(F.sym).up;
    for (std::size_t k = 0; k < F.s.size(); ++k)
      if (F.s[k].up != nat[k]) {
        Index q{fresh_label(), static_cast<bool>(nat[k])};
        extra.push_back(fac(S::g, {F.s[k], flip(q)}));
        F.s[k] = q;
      }
  }
  out.f.insert(out.f.end(), extra.begin(), extra.end());
  return out;
}

Expr nab(Index x, const Expr& e) { return nabla(x, e); }

Expr dgamma(Index e, Index a, Index b) { return delta_christoffel(e, a, b); }

Expr delta_riem(Index h, Index e, Index f, Index g) {
  return nab(f, dgamma(h, g, e)) - nab(g, dgamma(h, f, e));
}

Expr delta_ricci(Index k, Index l, const Context& ctx) {
  Index a = fr(true);
  if (ctx.riemann_variation) return delta_riem(a, k, flip(a), l);
  return nab(flip(a), dgamma(a, l, k)) - nab(l, dgamma(a, flip(a), k));
}

bool metric_mode(Wrt w) { return w == Wrt::metric; }

Expr vary_base(const Factor& X, Wrt w, const Context& ctx) {
  const Symbol& S0 = sym(X.sym);
  switch (X.sym) {
    case S::g: {
      if (!metric_mode(w)) return {};
      Index a = X.s[0], b = X.s[1];
      if (!a.up && !b.up) return one(fac(S::dg, {a, b}));
      if (a.up && b.up) {
        Index c = fr(false), d = fr(false);
        return -(G2(a, flip(c)) * G2(b, flip(d)) * one(fac(S::dg, {c, d})));
      }
      return {};
    }
    case S::pi:
      return metric_mode(w) ? Expr{} : one(fac(S::dpi, X.s));
    case S::R: {
      if (!metric_mode(w)) return {};
      Index k = fr(true), l = fr(true);
      Expr a = -(one(fac(S::Ricci, {k, l})) * one(fac(S::dg, {flip(k), flip(l)})));
      return a + G2(k, l) * delta_ricci(flip(k), flip(l), ctx);
    }
    case S::Ricci:
      return metric_mode(w) ? delta_ricci(X.s[0], X.s[1], ctx) : Expr{};
    case S::Riem:
      return metric_mode(w) ? delta_riem(X.s[0], X.s[1], X.s[2], X.s[3]) : Expr{};
    default:
      break;
  }
  switch (S0.vclass) {
    case VarClass::smearing:
    case VarClass::constant:
    case VarClass::field:
      return {};
    case VarClass::formal:
      throw UnsupportedSymbol("expression already contains the formal variation '" + S0.name + "'");
    default:
      throw UnsupportedSymbol("no variation rule for symbol '" + S0.name + "'");
  }
}

Expr vary_factor(const Factor& F, Wrt w, const Context& ctx) {
  Factor X = F;
  X.d.clear();
  std::size_t n = F.d.size();
  Expr out = nabla_chain(F.d, vary_base(X, w, ctx));
  if (!metric_mode(w)) return out;
  for (std::size_t k = 0; k < n; ++k) {
    Index x = F.d[k];
    Factor Z = F;
    Z.d.erase(Z.d.begin(), Z.d.begin() + static_cast<long>(k) + 1);
    Expr corr;
    auto each = [&](Index z, auto setter) {
      Factor Zp = Z;
      if (z.up) {
        Index e = fr(true);
        setter(Zp, e);
        corr += dgamma(z, x, flip(e)) * one(Zp);
      } else {
        Index e = fr(false);
        setter(Zp, e);
        corr -= dgamma(flip(e), x, z) * one(Zp);
      }
    };
    for (std::size_t p = 0; p < Z.d.size(); ++p) each(Z.d[p], [p](Factor& G, Index v) { G.d[p] = v; });
    for (std::size_t p = 0; p < Z.s.size(); ++p) each(Z.s[p], [p](Factor& G, Index v) { G.s[p] = v; });
    if (F.sym == S::pi || F.sym == S::dpi) {
      // weight-one density: nabla_x Z carries -Gamma^e_{ex} Z
      Index e = fr(true);
      corr -= dgamma(e, flip(e), x) * one(Z);
    }
    std::vector<Index> outer(F.d.begin(), F.d.begin() + static_cast<long>(k));
    out += nabla_chain(outer, corr);
  }
  return out;
}

Expr vary(const Expr& e0, Wrt w, const Context& ctx) {
  Expr e = expand_dewitt(e0, ctx);
  Expr out;
  for (const auto& t0 : e.terms) {
    Term t = naturalize(t0);
    if (metric_mode(w) && t.wpow != 0) {
      Index a = fr(true), b = fr(true);
      Term half = t;
      half.c *= Rational(t.wpow, 2);
      Expr piece = G2(a, b) * one(fac(S::dg, {flip(a), flip(b)}));
      for (const auto& p : piece.terms) out.terms.push_back(mul_terms(half, p));
    }
    for (std::size_t k = 0; k < t.f.size(); ++k) {
      Expr d = vary_factor(t.f[k], w, ctx);
      if (d.is_zero()) continue;
      Term rest = t;
      rest.f.erase(rest.f.begin() + static_cast<long>(k));
      for (const auto& x : d.terms) out.terms.push_back(mul_terms(rest, x));
    }
    ctx.check(out.size());
  }
  return normalize(out, ctx);
}

}  // namespace

int special_arity(SpecialKind kind) {
  switch (kind) {
    case SpecialKind::Xi: return 6;
    case SpecialKind::A0: return 6;
    case SpecialKind::A1: return 6;
    case SpecialKind::A2: return 7;
    case SpecialKind::F0: return 8;
    case SpecialKind::DeWitt:
    case SpecialKind::DeWittInverse: return 4;
  }
  return 0;
}

const char* special_name(SpecialKind kind) {
  switch (kind) {
    case SpecialKind::Xi: return "Xi";
    case SpecialKind::A0: return "A0";
    case SpecialKind::A1: return "A1";
    case SpecialKind::A2: return "A2";
    case SpecialKind::F0: return "F0";
    case SpecialKind::DeWitt: return "DeWitt";
    case SpecialKind::DeWittInverse: return "DeWittInverse";
  }
  return "?";
}

Expr build_special(SpecialKind kind, const std::vector<Index>& binding, int dim) {
  if (static_cast<int>(binding.size()) != special_arity(kind))
    throw StructureError(std::string("arity mismatch for special tensor ") + special_name(kind));
  return simplify_metric(build_raw(kind, binding, dim), dim);
}


Expr delta_christoffel(Index e, Index a, Index b) {
  Index c = fr(true);
  Index cd = flip(c);
  auto D = [](Index x, Index p, Index q) { return one(fac(S::dg, {p, q}, {x})); };
  return Rational(1, 2) * (G2(e, c) * (D(a, b, cd) + D(b, a, cd) - D(cd, a, b)));
}

Expr vary_metric(const Expr& e, const Context& ctx) { return vary(e, Wrt::metric, ctx); }
Expr vary_momentum(const Expr& e, const Context& ctx) { return vary(e, Wrt::momentum, ctx); }

Expr functional_derivative(const Expr& density, Wrt wrt, Index a, Index b, const Context& ctx) {
  int target = wrt == Wrt::metric ? S::dg : S::dpi;
  Expr varied = vary(density, wrt, ctx);
  Expr parts = integrate_by_parts(varied, target, ctx, false).e;
  bool up_out = wrt == Wrt::metric;
  Index A{a.id, up_out}, B{b.id, up_out};
  Expr out;
  for (auto t : parts.terms) {
    rename_dummies_fresh(t);
    int k = -1;
    for (std::size_t j = 0; j < t.f.size(); ++j)
      if (t.f[j].sym == target) k = static_cast<int>(j);
    if (k < 0) continue;
    Index s1 = t.f[k].s[0], s2 = t.f[k].s[1];
    t.f.erase(t.f.begin() + k);
    Expr sel = Rational(1, 2) * (G2(A, s1) * G2(B, s2) + G2(A, s2) * G2(B, s1));
    for (const auto& p : sel.terms) out.terms.push_back(mul_terms(t, p));
  }
  return normalize(out, ctx);
}

}  // namespace cg
