#include "cg/calculus.hpp"

#include <algorithm>
#include <numeric>

namespace cg {

void Context::check(std::size_t nterms) const {
  if (cancel && cancel->load()) throw Cancelled("computation cancelled");
  if (nterms > max_terms) throw ResourceExceeded("term count " + std::to_string(nterms) + " exceeds cap");
}

namespace {

Term without_factor(const Term& t, int k) {
  Term r = t;
  r.f.erase(r.f.begin() + k);
  return r;
}

Expr times_factors(const Expr& e, const Term& rest) {
  Expr out;
  for (const auto& x : e.terms) out.terms.push_back(mul_terms(rest, x));
  return out;
}

}  // namespace

Expr nabla(Index i, const Expr& e) {
  Expr out;
  for (const auto& t0 : e.terms) {
    Term t = t0;
    auto occ = occurrences(t, i.id);
    if (occ.size() >= 2) rename_label(t, i.id, fresh_label());
    for (std::size_t k = 0; k < t.f.size(); ++k) {
      if (sym(t.f[k].sym).cov_const) continue;
      Term n = t;
      n.f[k].d.insert(n.f[k].d.begin(), i);
      out.terms.push_back(std::move(n));
    }
  }
  return out;
}

Expr nabla_chain(const std::vector<Index>& prefix, const Expr& e) {
  Expr cur = e;
  for (auto it = prefix.rbegin(); it != prefix.rend(); ++it) cur = nabla(*it, cur);
  return cur;
}

Expr leibniz_expand(Index i, const Expr& e, const Context& ctx) { return normalize(nabla(i, e), ctx); }

Expr swap_correction(const Term& t, int fi, int pos) {
  const Factor& F = t.f[fi];
  Index x = F.d[pos], y = F.d[pos + 1];
  // inner tensor Y = nabla_{d[pos+2..]} X, slots = inner prefix then X slots
  Factor Y = F;
  Y.d.erase(Y.d.begin(), Y.d.begin() + pos + 2);
  std::vector<Index> outer(F.d.begin(), F.d.begin() + pos);
  Expr inner;
  auto add_slot = [&](Index s, auto setter) {
    int e = fresh_label();
    Factor Yp = Y;
    setter(Yp, Index{e, s.up});
    Term nt;
    if (s.up) {
      nt.c = Rational(1);
      nt.f = {fac(S::Riem, {s, Index{e, false}, x, y}), Yp};
    } else {
      nt.c = Rational(-1);
      nt.f = {fac(S::Riem, {Index{e, true}, s, x, y}), Yp};
    }
    inner.terms.push_back(std::move(nt));
  };
  for (std::size_t k = 0; k < Y.d.size(); ++k)
    add_slot(Y.d[k], [k](Factor& G, Index v) { G.d[k] = v; });
  for (std::size_t k = 0; k < Y.s.size(); ++k)
    add_slot(Y.s[k], [k](Factor& G, Index v) { G.s[k] = v; });
  Expr withouter = nabla_chain(outer, inner);
  Term rest = without_factor(t, fi);
  return times_factors(withouter, rest);
}

std::pair<Term, Expr> reorder_prefix(const Term& t, int fi, const std::vector<int>& perm) {
  Term cur = t;
  Expr corr;
  std::vector<int> arr(perm.size());
  std::iota(arr.begin(), arr.end(), 0);
  for (std::size_t k = 0; k < perm.size(); ++k) {
    std::size_t j = std::find(arr.begin(), arr.end(), perm[k]) - arr.begin();
    while (j > k) {
      corr += swap_correction(cur, fi, static_cast<int>(j - 1));
      std::swap(cur.f[fi].d[j - 1], cur.f[fi].d[j]);
      std::swap(arr[j - 1], arr[j]);
      --j;
    }
  }
  return {cur, corr};
}

namespace {

// moves prefix position k of factor fi to the innermost position
std::pair<Term, Expr> move_innermost(const Term& t, int fi, int k) {
  int n = static_cast<int>(t.f[fi].d.size());
  std::vector<int> perm;
  for (int j = 0; j < n; ++j)
    if (j != k) perm.push_back(j);
  perm.push_back(k);
  return reorder_prefix(t, fi, perm);
}

// prefix position contracted with one of the factor's own slots, innermost first
int self_divergence_pos(const Factor& F, int* slot = nullptr) {
  for (int k = static_cast<int>(F.d.size()) - 1; k >= 0; --k)
    for (int j = 0; j < static_cast<int>(F.s.size()); ++j)
      if (F.s[j].id == F.d[k].id) {
        if (slot) *slot = j;
        return k;
      }
  return -1;
}

// traces of curvature factors; returns true and fills out if a rewrite applied
bool curvature_trace(const Term& t, Expr& out) {
  for (std::size_t k = 0; k < t.f.size(); ++k) {
    const Factor& F = t.f[k];
    if (F.sym == S::Ricci && F.s[0].id == F.s[1].id) {
      Term n = t;
      n.f[k] = Factor{S::R, F.d, {}};
      out.terms.push_back(std::move(n));
      return true;
    }
    if (F.sym != S::Riem) continue;
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b) {
        if (F.s[a].id != F.s[b].id) continue;
        if ((a == 0 && b == 1) || (a == 2 && b == 3)) return true;  // vanishes
        int p = 0, q = 0, sg = 1;
        if (a == 0 && b == 2) { p = 1; q = 3; }
        else if (a == 0 && b == 3) { p = 1; q = 2; sg = -1; }
        else if (a == 1 && b == 2) { p = 0; q = 3; sg = -1; }
        else { p = 0; q = 2; }
        Term n = t;
        n.c *= Rational(sg);
        n.f[k] = Factor{S::Ricci, F.d, {F.s[p], F.s[q]}};
        out.terms.push_back(std::move(n));
        return true;
      }
  }
  return false;
}

bool contracted_bianchi(const Term& t, Expr& out) {
  for (std::size_t k = 0; k < t.f.size(); ++k) {
    const Factor& F = t.f[k];
    if (F.sym != S::Ricci && F.sym != S::Riem) continue;
    int slot = -1;
    int pos = self_divergence_pos(F, &slot);
    if (pos < 0) continue;
    Term cur = t;
    if (pos != static_cast<int>(F.d.size()) - 1) {
      auto [moved, corr] = move_innermost(t, static_cast<int>(k), pos);
      out += corr;
      cur = moved;
    }
    const Factor& G = cur.f[k];
    std::vector<Index> outer(G.d.begin(), G.d.end() - 1);
    if (G.sym == S::Ricci) {
      Index b = G.s[1 - slot];
      Term n = cur;
      n.c *= Rational(1, 2);
      auto pre = outer;
      pre.push_back(b);
      n.f[k] = Factor{S::R, pre, {}};
      out.terms.push_back(std::move(n));
      return true;
    }
    Index s0 = G.s[0], s1 = G.s[1], s2 = G.s[2], s3 = G.s[3];
    Index b, c, d;
    int sg = 1;
    switch (slot) {
      case 0: b = s1; c = s2; d = s3; break;
      case 1: b = s0; c = s2; d = s3; sg = -1; break;
      case 2: b = s3; c = s0; d = s1; break;
      default: b = s2; c = s0; d = s1; sg = -1; break;
    }
    // nabla^a R_{abcd} = nabla_c R_{bd} - nabla_d R_{bc}
    Term n1 = cur, n2 = cur;
    auto p1 = outer, p2 = outer;
    p1.push_back(c);
    p2.push_back(d);
    n1.c *= Rational(sg);
    n2.c *= Rational(-sg);
    n1.f[k] = Factor{S::Ricci, p1, {b, d}};
    n2.f[k] = Factor{S::Ricci, p2, {b, c}};
    out.terms.push_back(std::move(n1));
    out.terms.push_back(std::move(n2));
    return true;
  }
  return false;
}

// canonical representative with exact commutation corrections
Expr commute_canonical_term(const Term& t0, const Context& ctx) {
  auto tc = contract_metrics(t0);
  if (!tc) return {};
  const Term& t = *tc;
  CanonOptions opt;
  opt.commute = true;
  opt.dim = ctx.dim;
  auto r = canon_search(t, opt);
  if (r.zero) return {};
  auto corrections = [&](const CanonLeaf& L) {
    Term cur = t;
    Expr corr;
    for (std::size_t j = 0; j < L.order.size(); ++j) {
      const auto& p = L.dperm[j];
      bool ident = true;
      for (std::size_t q = 0; q < p.size(); ++q) ident &= p[q] == static_cast<int>(q);
      if (ident) continue;
      auto [nt, c] = reorder_prefix(cur, L.order[j], p);
      corr += c;
      cur = nt;
    }
    return corr;
  };
  Expr out;
  if (r.antisym) {
    Expr c1 = corrections(r.leaf), c2 = corrections(r.leaf2);
    out = Rational(1, 2) * (c1 + c2);
    return out;
  }
  out = corrections(r.leaf);
  // first Bianchi, one Riemann factor at a time: the representative is
  // eliminated when it is the largest member of a cyclic relation
  const Term& rep = r.term;
  for (std::size_t ri = 0; ri < rep.f.size(); ++ri) {
    if (rep.f[ri].sym != S::Riem) continue;
    const auto& s = rep.f[ri].s;
    Term unit = rep;
    unit.c = Rational(1);
    Term t2 = unit, t3 = unit;
    t2.f[ri].s = {s[0], s[2], s[3], s[1]};
    t3.f[ri].s = {s[0], s[3], s[1], s[2]};
    CanonOptions eo;
    eo.dim = ctx.dim;
    std::vector<Term> rel;
    for (const Term* x : {&unit, &t2, &t3})
      if (auto c = canonicalize_term(*x, eo)) rel.push_back(*c);
    Expr R = collect(rel);
    if (R.is_zero()) continue;
    const Term& mx = R.terms.back();
    if (!same_structure(mx, rep)) continue;
    Rational kappa = mx.c;
    for (std::size_t q = 0; q + 1 < R.terms.size(); ++q) {
      Term n = R.terms[q];
      n.c = -rep.c * n.c / kappa;
      out.terms.push_back(std::move(n));
    }
    return out;
  }
  out.terms.push_back(rep);
  return out;
}

}  // namespace

Expr apply_identities(const Expr& e, const Context& ctx) {
  Expr out;
  for (const auto& t0 : e.terms) {
    auto tc = contract_metrics(t0);
    if (!tc) continue;
    Expr r;
    if (curvature_trace(*tc, r) || contracted_bianchi(*tc, r)) {
      out += r;
    } else {
      out.terms.push_back(*tc);
    }
  }
  ctx.check(out.size());
  return out;
}

Expr expand_dewitt(const Expr& e, const Context& ctx) {
  if (!contains_symbol(e, S::G) && !contains_symbol(e, S::Ginv)) return e;
  if (ctx.dim < 2) throw std::invalid_argument("DeWitt supermetric needs a dimension of at least 2");
  auto realize = [&](bool upper) {
    std::vector<Index> v;
    for (const char* n : {"a~", "b~", "c~", "d~"}) v.push_back(Index{label(n), upper});
    Expr sym_part = Rational(1, 2) * (metric(v[0], v[2]) * metric(v[1], v[3]) + metric(v[0], v[3]) * metric(v[1], v[2]));
    Rational tr = upper ? Rational(1) : Rational(1, ctx.dim - 1);
    return std::make_pair(v, sym_part - tr * (metric(v[0], v[1]) * metric(v[2], v[3])));
  };
  auto [dv, dr] = realize(false);
  auto [uv, ur] = realize(true);
  return substitute(substitute(e, S::G, dv, dr, ctx), S::Ginv, uv, ur, ctx);
}

Expr normalize(const Expr& e, const Context& ctx) {
  Expr cur = simplify_metric(expand_dewitt(e, ctx), ctx.dim);
  for (int pass = 0; pass < ctx.max_passes; ++pass) {
    ctx.check(cur.size());
    Expr a = apply_identities(cur, ctx);
    Expr b;
    for (const auto& t : a.terms) {
      b += commute_canonical_term(t, ctx);
      if ((b.size() & 1023) == 0) ctx.check(b.size());
    }
    Expr c = simplify_metric(b, ctx.dim);
    if (identical(c, cur)) return c;
    cur = std::move(c);
  }
  throw ResourceExceeded("normal form did not stabilize within the pass cap");
}

bool equal_normal(const Expr& a, const Expr& b, const Context& ctx) { return normalize(a - b, ctx).is_zero(); }

Expr commute_to_order(const Term& t, OrderPolicy policy, const Context& ctx) {
  if (policy == OrderPolicy::canonical) return normalize(Expr(t), ctx);
  // divergence exposing: contracted prefix index of each factor moved innermost
  Expr out;
  std::vector<Term> work{t};
  while (!work.empty()) {
    Term cur = work.back();
    work.pop_back();
    bool moved = false;
    for (std::size_t k = 0; k < cur.f.size() && !moved; ++k) {
      int pos = self_divergence_pos(cur.f[k]);
      if (pos >= 0 && pos != static_cast<int>(cur.f[k].d.size()) - 1) {
        auto [nt, corr] = move_innermost(cur, static_cast<int>(k), pos);
        out += corr;
        work.push_back(nt);
        moved = true;
      }
    }
    if (!moved) out.terms.push_back(cur);
  }
  return out;
}

bool is_density(const Term& t) {
  int w = t.wpow;
  for (const auto& F : t.f) w += (F.sym == S::pi || F.sym == S::dpi) ? 1 : 0;
  return w == 1;
}

IbpResult integrate_by_parts(const Expr& e, int target, const Context& ctx, bool canonical_output) {
  IbpResult res;
  std::vector<Term> work(e.terms.begin(), e.terms.end());
  std::vector<Term> done;
  while (!work.empty()) {
    Term t = std::move(work.back());
    work.pop_back();
    if (!is_density(t)) res.density_warning = true;
    int k = -1, n = 0;
    for (std::size_t j = 0; j < t.f.size(); ++j)
      if (t.f[j].sym == target) {
        ++n;
        if (k < 0 && !t.f[j].d.empty()) k = static_cast<int>(j);
      }
    if (n > 1) throw StructureError("integration by parts target '" + sym(target).name + "' occurs more than once");
    if (k < 0) {
      done.push_back(std::move(t));
      continue;
    }
    Factor F = t.f[k];
    Index x = F.d.front();
    F.d.erase(F.d.begin());
    Term rest = without_factor(t, k);
    rest.c = -rest.c;
    Expr moved = nabla(x, Expr(rest));
    for (auto& m : moved.terms) {
      m.f.push_back(F);
      work.push_back(std::move(m));
    }
    ctx.check(work.size() + done.size());
  }
  res.e = canonical_output ? simplify_metric(collect(std::move(done)), ctx.dim) : collect(std::move(done));
  return res;
}

Expr substitute(const Expr& e, int target, const std::vector<Index>& pattern, const Expr& replacement,
                const Context& ctx) {
  if (static_cast<int>(pattern.size()) != sym(target).nslots)
    throw StructureError("substitution pattern arity mismatch for '" + sym(target).name + "'");
  if (contains_symbol(replacement, target)) throw StructureError("replacement contains the target symbol");
  auto sig = free_signature(replacement);
  if (!replacement.is_zero()) {
    auto ps = pattern;
    std::sort(ps.begin(), ps.end(), [](const Index& a, const Index& b) {
      if (label_name(a.id) != label_name(b.id)) return label_name(a.id) < label_name(b.id);
      return a.up < b.up;
    });
    if (ps != sig) throw StructureError("replacement free indices do not match the substitution pattern");
  }
  std::vector<Term> work(e.terms.begin(), e.terms.end());
  std::vector<Term> done;
  while (!work.empty()) {
    Term t = std::move(work.back());
    work.pop_back();
    int k = -1;
    for (std::size_t j = 0; j < t.f.size(); ++j)
      if (t.f[j].sym == target) {
        k = static_cast<int>(j);
        break;
      }
    if (k < 0) {
      done.push_back(std::move(t));
      continue;
    }
    const Factor F = t.f[k];
    Expr rep;
    for (auto rt : replacement.terms) {
      rename_dummies_fresh(rt);
      std::vector<int> tmp;
      for (const auto& p : pattern) {
        tmp.push_back(fresh_label());
        rename_label(rt, p.id, tmp.back());
      }
      Expr piece(rt);
      for (std::size_t p = 0; p < pattern.size(); ++p) {
        Index want = F.s[p];
        Index have = pattern[p];
        if (want.up == have.up) {
          for (auto& x : piece.terms) rename_label(x, tmp[p], want.id);
        } else {
          int q = fresh_label();
          for (auto& x : piece.terms) rename_label(x, tmp[p], q);
          piece = piece * metric(want, Index{q, !have.up});
        }
      }
      rep += piece;
    }
    rep = nabla_chain(F.d, rep);
    Term rest = without_factor(t, k);
    for (const auto& r : rep.terms) work.push_back(mul_terms(rest, r));
    ctx.check(work.size() + done.size());
  }
  return simplify_metric(collect(std::move(done)), ctx.dim);
}

}  // namespace cg
