#include "cg/classify.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "cg/parse.hpp"
#include "cg/render.hpp"

namespace cg {

GradeKey grade_of(const Term& t) { return {momentum_power(t), derivative_degree(t), smearing_derivs(t)}; }

std::vector<GradeBucket> classify(const Expr& e) {
  std::map<GradeKey, Expr> m;
  for (const auto& t : e.terms) m[grade_of(t)].terms.push_back(t);
  std::vector<GradeBucket> out;
  for (auto& [k, x] : m) out.push_back({k, std::move(x)});
  return out;
}

Shape shape_of(const Term& t, bool traces) {
  Shape s;
  s.key = grade_of(t);
  for (const auto& F : t.f) {
    if (F.sym != S::pi) continue;
    bool traced = traces && F.s[0].id == F.s[1].id;
    s.pis.emplace_back(static_cast<int>(F.d.size()), traced);
  }
  std::sort(s.pis.rbegin(), s.pis.rend());
  return s;
}

std::string shape_name(const Shape& s) {
  std::ostringstream o;
  o << "pi^" << s.key.pi_power << " deg " << s.key.deriv_degree << " smear " << s.key.smearing_derivs << " [";
  for (std::size_t k = 0; k < s.pis.size(); ++k) {
    if (k) o << ",";
    o << s.pis[k].first << (s.pis[k].second ? "t" : "");
  }
  o << "]";
  return o.str();
}

Expr project(const Expr& e, const Shape& s, bool traces) {
  Expr out;
  for (const auto& t : e.terms)
    if (shape_of(t, traces) == s) out.terms.push_back(t);
  return out;
}

Expr project_if(const Expr& e, const std::function<bool(const Term&)>& keep) {
  Expr out;
  for (const auto& t : e.terms)
    if (keep(t)) out.terms.push_back(t);
  return out;
}

namespace {
std::tuple<int, int, int, int, int> lead_key(const Shape& s) {
  int total = 0, nd = 0;
  for (auto [d, tr] : s.pis) {
    total += d;
    nd += d > 0;
  }
  return {s.key.pi_power, total, nd, s.key.smearing_derivs, s.key.deriv_degree};
}
}  // namespace

bool shape_leads(const Shape& a, const Shape& b) {
  auto ka = lead_key(a), kb = lead_key(b);
  if (ka != kb) return ka > kb;
  return a > b;
}

namespace {
bool has_divergence(const Term& t) {
  for (const auto& F : t.f) {
    if (F.sym != S::pi || F.d.empty()) continue;
    int inner = F.d.back().id;
    if (F.s[0].id == inner || F.s[1].id == inner) return true;
  }
  return false;
}
}  // namespace

WeakReduction reduce_weakly(const Expr& e, const Context& ctx) {
  WeakReduction r;
  Expr cur = normalize(e, ctx);
  for (int pass = 1;; ++pass) {
    if (pass > ctx.max_passes) throw ResourceExceeded("weak reduction did not stabilize within the pass cap");
    r.passes = pass;
    bool dropped = false;
    Expr next;
    for (const auto& t : cur.terms) {
      Expr exposed = commute_to_order(t, OrderPolicy::divergence_exposing, ctx);
      for (auto& u : exposed.terms) {
        if (has_divergence(u)) {
          dropped = true;
          r.log.push_back("pass " + std::to_string(pass) + ": " + render_text(Expr(u)));
        } else {
          next.terms.push_back(std::move(u));
        }
      }
      ctx.check(next.size());
    }
    cur = normalize(next, ctx);
    if (!dropped) break;
  }
  r.e = std::move(cur);
  return r;
}

namespace {
struct StructLess {
  bool operator()(const Term& a, const Term& b) const { return term_less_structure(a, b); }
};

using Row = std::vector<Rational>;

// Gaussian elimination on [A | b]; returns a solution with free variables 0, or
// nullopt if inconsistent.
std::optional<std::vector<Rational>> solve(std::vector<Row> rows, int ncols) {
  int r = 0;
  std::vector<int> pivcol;
  for (int c = 0; c < ncols && r < static_cast<int>(rows.size()); ++c) {
    int p = -1;
    for (int i = r; i < static_cast<int>(rows.size()); ++i)
      if (!rows[i][c].is_zero()) {
        p = i;
        break;
      }
    if (p < 0) continue;
    std::swap(rows[r], rows[p]);
    Rational inv = Rational(1) / rows[r][c];
    for (auto& x : rows[r]) x *= inv;
    for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
      if (i == r || rows[i][c].is_zero()) continue;
      Rational m = rows[i][c];
      for (int j = c; j <= ncols; ++j) rows[i][j] -= m * rows[r][j];
    }
    pivcol.push_back(c);
    ++r;
  }
  for (int i = r; i < static_cast<int>(rows.size()); ++i)
    if (!rows[i][ncols].is_zero()) return std::nullopt;
  std::vector<Rational> x(ncols);
  for (int i = 0; i < r; ++i) x[pivcol[i]] = rows[i][ncols];
  return x;
}
}  // namespace

MatchResult match_constraint_combination(const Expr& e, const std::vector<Candidate>& cands, const Context& ctx) {
  MatchResult res;
  Expr target = normalize(e, ctx);
  if (target.is_zero()) {
    res.success = true;
    return res;
  }
  std::map<Term, int, StructLess> index;
  std::vector<Term> keys;
  auto row_of = [&](const Term& t) {
    auto [it, fresh] = index.emplace(t, static_cast<int>(keys.size()));
    if (fresh) keys.push_back(t);
    return it->second;
  };
  int n = static_cast<int>(cands.size());
  std::vector<std::map<int, Rational>> cols(n);
  for (int i = 0; i < n; ++i)
    for (const auto& t : normalize(cands[i].contribution, ctx).terms) cols[i][row_of(t)] += t.c;
  std::map<int, Rational> rhs;
  for (const auto& t : target.terms) rhs[row_of(t)] += t.c;

  std::map<std::pair<int, int>, std::vector<int>> groups;
  for (int k = 0; k < static_cast<int>(keys.size()); ++k)
    groups[{momentum_power(keys[k]), derivative_degree(keys[k])}].push_back(k);

  auto build = [&](const std::vector<int>& rowset) {
    std::vector<Row> rows;
    for (int k : rowset) {
      Row row(n + 1);
      for (int i = 0; i < n; ++i) {
        auto it = cols[i].find(k);
        if (it != cols[i].end()) row[i] = it->second;
      }
      auto it = rhs.find(k);
      if (it != rhs.end()) row[n] = it->second;
      rows.push_back(std::move(row));
    }
    return rows;
  };

  std::vector<int> kept;
  std::vector<Rational> x(n);
  for (auto& [g, rowset] : groups) {
    std::vector<int> trial = kept;
    trial.insert(trial.end(), rowset.begin(), rowset.end());
    if (auto sol = solve(build(trial), n)) {
      kept = std::move(trial);
      x = *sol;
    }
  }
  Expr recon;
  for (int i = 0; i < n; ++i) {
    if (x[i].is_zero()) continue;
    recon += x[i] * cands[i].contribution;
    res.kernels.push_back({cands[i].constraint, normalize(x[i] * cands[i].kernel, ctx)});
  }
  res.remainder = normalize(target - recon, ctx);
  res.success = res.remainder.is_zero();
  return res;
}

namespace {
bool is_base(const ConstraintSpec& s) {
  return s.kind == ConstraintKind::gr_hamiltonian || s.kind == ConstraintKind::momentum_constraint;
}

Expr total_density(const std::vector<ConstraintSpec>& specs, bool vector, const Expr& smear, const Context& ctx) {
  Expr out;
  for (const auto& s : specs)
    if (is_vector(s) == vector) out += make_constraint_with(s, smear, ctx).density;
  return out;
}
}  // namespace

std::vector<Candidate> candidate_library(const std::vector<ConstraintSpec>& specs, PairKind kind,
                                         const Context& ctx) {
  std::vector<Candidate> out;
  bool has_vec = std::any_of(specs.begin(), specs.end(), [](const auto& s) { return is_vector(s); });
  bool has_scal = std::any_of(specs.begin(), specs.end(), [](const auto& s) { return !is_vector(s); });
  switch (kind) {
    case PairKind::scalar_scalar: {
      if (has_vec) {
        Expr anti = parse("f*D(_b, h) - h*D(_b, f)");
        for (const char* x : {"g[^a ^b]", "isqrtg*pi[^a ^b]", "isqrtg*pi[^c ^d]*g[_c _d]*g[^a ^b]", "R*g[^a ^b]",
                              "Ricci[^a ^b]"}) {
          Expr k = parse(x) * anti;
          out.push_back({"H_a", k, local_form(total_density(specs, true, k, ctx), S::h, ctx)});
        }
      }
      if (has_scal) {
        Expr k = parse("f*D(^a, D(_a, h)) - h*D(^a, D(_a, f))");
        out.push_back({"H", k, local_form(total_density(specs, false, k, ctx), S::h, ctx)});
      }
      break;
    }
    case PairKind::scalar_vector: {
      Expr k = parse("xi[^a]*D(_a, f)");
      out.push_back({"H", k, local_form(total_density(specs, false, k, ctx), S::f, ctx)});
      Expr kv = parse("f*xi[^a]");
      out.push_back({"H_a", kv, local_form(total_density(specs, true, kv, ctx), S::f, ctx)});
      break;
    }
    case PairKind::vector_vector: {
      Expr k = parse("xi[^b]*D(_b, eta[^a]) - eta[^b]*D(_b, xi[^a])");
      out.push_back({"H_a", k, local_form(total_density(specs, true, k, ctx), S::eta, ctx)});
      break;
    }
  }
  return out;
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::first_class: return "first-class";
    case Verdict::second_class: return "second-class";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

namespace {
BlockReport run_block(const std::string& name, const Expr& local, const std::vector<ConstraintSpec>& specs,
                      PairKind kind, const Context& ctx) {
  BlockReport b;
  b.name = name;
  b.local = normalize(local, ctx);
  b.match = match_constraint_combination(b.local, candidate_library(specs, kind, ctx), ctx);
  b.reduced = reduce_weakly(b.match.remainder, ctx);
  b.residue = classify(b.reduced.e);
  return b;
}
}  // namespace

ObstructionReport closure_report(const std::vector<ConstraintSpec>& specs, const ClosureOptions& opt,
                                 const Context& ctx) {
  ObstructionReport rep;
  for (const auto& s : specs) check_spec(s, ctx);
  std::vector<const ConstraintSpec*> scal, vec;
  for (const auto& s : specs) (is_vector(s) ? vec : scal).push_back(&s);
  if (vec.size() > 1) throw SpecError("at most one vector constraint is supported");
  try {
    if (!scal.empty()) {
      Expr total;
      for (std::size_t i = 0; i < scal.size(); ++i)
        for (std::size_t j = i; j < scal.size(); ++j) {
          if (!opt.include_mod_mod && !is_base(*scal[i]) && !is_base(*scal[j])) continue;
          Expr b = antisymmetrized_bracket(*scal[i], *scal[j], S::f, S::h, ctx);
          total += (i == j ? Rational(1) : Rational(2)) * b;
          ctx.check(total.size());
        }
      rep.blocks.push_back(run_block("{H(f),H(h)}", local_form(normalize(total, ctx), S::h, ctx), specs,
                                     PairKind::scalar_scalar, ctx));
    }
    if (!vec.empty()) {
      auto P = [&](int s) { return make_constraint(*vec[0], s, ctx); };
      if (!scal.empty()) {
        Expr total;
        for (const auto* s : scal) total += poisson_bracket(make_constraint(*s, S::f, ctx), P(S::xi), ctx);
        rep.blocks.push_back(run_block("{H(f),H_a(xi)}", local_form(normalize(total, ctx), S::f, ctx), specs,
                                       PairKind::scalar_vector, ctx));
      }
      Expr b = poisson_bracket(P(S::xi), P(S::eta), ctx);
      rep.blocks.push_back(
          run_block("{H_a(xi),H_a(eta)}", local_form(b, S::eta, ctx), specs, PairKind::vector_vector, ctx));
    }
  } catch (const ResourceExceeded& e) {
    rep.verdict = Verdict::inconclusive;
    rep.note = std::string("resource cap exceeded: ") + e.what();
    return rep;
  } catch (const Cancelled& e) {
    rep.verdict = Verdict::inconclusive;
    rep.note = std::string("cancelled: ") + e.what();
    return rep;
  }

  rep.verdict = Verdict::first_class;
  for (const auto& b : rep.blocks) {
    for (const auto& k : b.match.kernels) rep.structure_functions.push_back(k);
    if (b.reduced.e.is_zero() || rep.verdict == Verdict::second_class) continue;
    rep.verdict = Verdict::second_class;
    rep.certificate_block = b.name;
    std::optional<Shape> best;
    for (const auto& t : b.reduced.e.terms) {
      Shape s = shape_of(t, false);
      if (!best || shape_leads(s, *best)) best = s;
    }
    rep.certificate_family = shape_name(*best);
    rep.certificate = project(b.reduced.e, *best, false);
    if (opt.focus) {
      Expr p = project_if(b.reduced.e, opt.focus);
      if (!p.is_zero()) {
        rep.certificate = std::move(p);
        rep.certificate_family = opt.focus_name;
      } else {
        rep.note = "requested certificate family " + opt.focus_name + " is empty; leading family used";
      }
    }
  }
  return rep;
}

nlohmann::json report_to_json(const ObstructionReport& r) {
  nlohmann::json j;
  j["verdict"] = verdict_name(r.verdict);
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : r.blocks) {
    nlohmann::json jb;
    jb["name"] = b.name;
    jb["local_terms"] = b.local.size();
    jb["matched"] = b.match.success;
    jb["remainder_terms"] = b.match.remainder.size();
    jb["residue_terms"] = b.reduced.e.size();
    jb["buckets"] = nlohmann::json::array();
    for (const auto& g : b.residue)
      jb["buckets"].push_back({{"pi_power", g.key.pi_power},
                               {"deriv_degree", g.key.deriv_degree},
                               {"smearing_derivs", g.key.smearing_derivs},
                               {"terms", g.terms.size()},
                               {"expr", render_text(g.terms)}});
    jb["reduction_log"] = b.reduced.log;
    j["blocks"].push_back(jb);
  }
  j["structure_functions"] = nlohmann::json::array();
  for (const auto& k : r.structure_functions)
    j["structure_functions"].push_back({{"constraint", k.constraint}, {"kernel", render_text(k.kernel)}});
  if (r.verdict == Verdict::second_class) {
    j["certificate"] = {{"block", r.certificate_block},
                        {"family", r.certificate_family},
                        {"text", render_text(r.certificate)},
                        {"latex", render_latex(r.certificate)},
                        {"expr", to_json(r.certificate)}};
  }
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

std::string report_to_latex(const ObstructionReport& r) {
  std::ostringstream o;
  o << "\\text{verdict: " << verdict_name(r.verdict) << "}\\\\\n";
  for (const auto& k : r.structure_functions)
    o << "\\text{" << k.constraint << " kernel: } " << render_latex(k.kernel) << "\\\\\n";
  if (r.verdict == Verdict::second_class) o << "\\text{certificate: } " << render_latex(r.certificate) << "\n";
  return o.str();
}

std::string report_to_text(const ObstructionReport& r) {
  std::ostringstream o;
  o << "verdict: " << verdict_name(r.verdict) << "\n";
  for (const auto& b : r.blocks) {
    o << b.name << ": " << b.local.size() << " local terms, remainder " << b.match.remainder.size()
      << ", residue " << b.reduced.e.size() << " (" << b.reduced.log.size() << " weak drops)\n";
    for (const auto& g : b.residue)
      o << "  bucket pi^" << g.key.pi_power << " deg " << g.key.deriv_degree << " smear " << g.key.smearing_derivs
        << ": " << g.terms.size() << " terms\n";
  }
  for (const auto& k : r.structure_functions) o << "structure function " << k.constraint << ": " << render_text(k.kernel) << "\n";
  if (r.verdict == Verdict::second_class) {
    o << "certificate (" << r.certificate_block << ", " << r.certificate_family << "):\n  "
      << render_text(r.certificate) << "\n";
  }
  if (!r.note.empty()) o << "note: " << r.note << "\n";
  return o.str();
}

namespace {
Expr rename_symbol(Expr e, int from, int to) {
  for (auto& t : e.terms)
    for (auto& F : t.f)
      if (F.sym == from) F.sym = to;
  return e;
}
}  // namespace

LinearReport check_linear_term_conditions(const Expr& beta, const Context& ctx) {
  LinearReport r;
  if (!beta.is_zero()) {
    auto sig = free_signature(beta);
    if (sig != std::vector<Index>{dn("a"), dn("b")})
      throw StructureError("beta must carry exactly the free indices _a _b");
  }
  Expr W = parse("Ginv[^a ^b ^i1 ^i2]") * beta;
  r.divergence = normalize(nabla(dn("i2"), W), ctx);
  r.divfree = r.divergence.is_zero();

  Expr Wkl = parse("Ginv[^a ^b ^k ^l]") * beta;
  Expr dW = vary_metric(Wkl, ctx);
  Expr du = rename_symbol(dW, S::dg, S::u);
  Expr dv = rename_symbol(dW, S::dg, S::v);
  Expr E = parse("sqrtg*v[_k _l]") * du - parse("sqrtg*u[_k _l]") * dv;
  r.curl = normalize(integrate_by_parts(normalize(E, ctx), S::v, ctx).e, ctx);
  r.curlfree = r.curl.is_zero();
  if (r.divfree && r.curlfree)
    r.note = "both conditions hold: Ginv beta is the metric derivative of a functional c[g], so the linear term "
             "is removed by the canonical shift pi -> pi - dc/dg";
  else if (!r.divfree)
    r.note = "divergence condition fails";
  else
    r.note = "curl condition fails";
  return r;
}

Expr ricci_partial(const Expr& e, Index k, Index l, const Context& ctx) {
  Index p{fresh_label(), false}, q{fresh_label(), false};
  Expr ric = ex({fac(S::g, {flip(p), flip(q)}), fac(S::Ricci, {p, q})});
  Expr src = substitute(e, S::R, {}, ric, ctx);
  Expr out;
  for (const auto& t : src.terms)
    for (std::size_t j = 0; j < t.f.size(); ++j) {
      const Factor& F = t.f[j];
      if (F.sym != S::Ricci || !F.d.empty()) continue;
      Term rest = t;
      rest.f.erase(rest.f.begin() + static_cast<long>(j));
      Index x = F.s[0], y = F.s[1];
      Expr d = Rational(1, 2) * (metric(k, x) * metric(l, y) + metric(k, y) * metric(l, x));
      out += Expr(rest) * d;
    }
  return normalize(out, ctx);
}

std::optional<Rational> proportional(const Expr& a, const Expr& b, const Context& ctx) {
  Expr x = normalize(a, ctx), y = normalize(b, ctx);
  if (y.is_zero()) return std::nullopt;
  if (x.is_zero()) return Rational(0);
  if (x.size() != y.size()) return std::nullopt;
  Rational lam = x.terms[0].c / y.terms[0].c;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!same_structure(x.terms[i], y.terms[i])) return std::nullopt;
    if (x.terms[i].c != lam * y.terms[i].c) return std::nullopt;
  }
  return lam;
}

}  // namespace cg
