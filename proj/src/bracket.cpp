#include "cg/bracket.hpp"

#include <set>

#include "cg/parse.hpp"
#include "cg/render.hpp"

namespace cg {

namespace {

const std::pair<ConstraintKind, const char*> kKinds[] = {
    {ConstraintKind::gr_hamiltonian, "gr_hamiltonian"}, {ConstraintKind::momentum_constraint, "momentum_constraint"},
    {ConstraintKind::kinetic_mod, "kinetic_mod"},       {ConstraintKind::potential_mod, "potential_mod"},
    {ConstraintKind::linear_mod, "linear_mod"},         {ConstraintKind::custom, "custom"}};

std::string nth(const char* base, int k) { return base + std::to_string(k); }

Expr prefixed_pi(const char* base, int count, const char* s0, const char* s1) {
  Factor F = fac(S::pi, {up(s0), up(s1)});
  for (int k = 1; k <= count; ++k) F.d.push_back(dn(nth(base, k)));
  return ex({F});
}

Expr scalar_of(int smearing) { return ex({fac(smearing, {})}); }

}  // namespace

const char* kind_name(ConstraintKind k) {
  for (auto [kk, n] : kKinds)
    if (kk == k) return n;
  return "custom";
}

ConstraintKind kind_from_name(const std::string& s) {
  for (auto [kk, n] : kKinds)
    if (s == n) return kk;
  throw SpecError("unknown constraint kind '" + s + "'");
}

ConstraintSpec gr_hamiltonian() {
  ConstraintSpec s;
  s.kind = ConstraintKind::gr_hamiltonian;
  s.label = "H";
  return s;
}
ConstraintSpec momentum_constraint() {
  ConstraintSpec s;
  s.kind = ConstraintKind::momentum_constraint;
  s.label = "H_a";
  return s;
}
ConstraintSpec kinetic_mod(Expr B, int n, int m, const std::string& label) {
  ConstraintSpec s;
  s.kind = ConstraintKind::kinetic_mod;
  s.B = std::move(B);
  s.n = n;
  s.m = m;
  s.label = label;
  return s;
}
ConstraintSpec potential_mod(Expr V, const std::string& label) {
  ConstraintSpec s;
  s.kind = ConstraintKind::potential_mod;
  s.V = std::move(V);
  s.label = label;
  return s;
}
ConstraintSpec linear_mod(Expr beta, const std::string& label) {
  ConstraintSpec s;
  s.kind = ConstraintKind::linear_mod;
  s.beta = std::move(beta);
  s.label = label;
  return s;
}
ConstraintSpec custom(Expr density, const std::string& label) {
  ConstraintSpec s;
  s.kind = ConstraintKind::custom;
  s.density = std::move(density);
  s.label = label;
  return s;
}
ConstraintSpec kinetic_gr() { return kinetic_mod(parse("isqrtg*G[_a _b _c _d]"), 0, 0, "F_o"); }
ConstraintSpec potential_gr() { return potential_mod(parse("-sqrtg*R + 2*Lambda*sqrtg"), "V"); }

Expr spec_density(const ConstraintSpec& s, const Context& ctx) {
  switch (s.kind) {
    case ConstraintKind::gr_hamiltonian:
      return spec_density(kinetic_gr(), ctx) + spec_density(potential_gr(), ctx);
    case ConstraintKind::momentum_constraint:
      return parse("-2*g[_a _b]*D(_c, pi[^c ^b])");
    case ConstraintKind::kinetic_mod:
      return s.B * prefixed_pi("i", s.n, "c", "d") * prefixed_pi("j", s.m, "a", "b");
    case ConstraintKind::potential_mod:
      return s.V;
    case ConstraintKind::linear_mod:
      return -(s.beta * parse("pi[^a ^b]"));
    case ConstraintKind::custom:
      return s.density;
  }
  return {};
}

bool is_vector(const ConstraintSpec& s) {
  if (s.kind == ConstraintKind::momentum_constraint) return true;
  if (s.kind == ConstraintKind::custom) return !free_signature(s.density).empty();
  return false;
}

void check_spec(const ConstraintSpec& s, const Context& ctx) {
  if (s.kind == ConstraintKind::linear_mod) {
    auto sig = free_signature(s.beta);
    if (!s.beta.is_zero() && sig != std::vector<Index>{dn("a"), dn("b")})
      throw SpecError("linear_mod: beta must carry exactly the free indices _a _b");
  }
  if (s.kind == ConstraintKind::potential_mod && !free_signature(s.V).empty())
    throw SpecError("potential_mod: V must be a scalar density");
  if (s.kind == ConstraintKind::custom) {
    auto sig = free_signature(s.density);
    if (!(sig.empty() || sig == std::vector<Index>{dn("a")}))
      throw SpecError("custom: density must be scalar or carry a single free _a index");
  }
  if (s.kind != ConstraintKind::kinetic_mod) return;
  if (s.n < 0 || s.m < 0) throw SpecError("kinetic_mod: derivative counts must be non-negative");
  std::vector<Index> want{dn("a"), dn("b"), dn("c"), dn("d")};
  for (int k = 1; k <= s.n; ++k) want.push_back(up(nth("i", k)));
  for (int k = 1; k <= s.m; ++k) want.push_back(up(nth("j", k)));
  std::sort(want.begin(), want.end(), [](const Index& x, const Index& y) {
    if (label_name(x.id) != label_name(y.id)) return label_name(x.id) < label_name(y.id);
    return x.up < y.up;
  });
  if (free_signature(s.B) != want)
    throw SpecError("kinetic_mod: B must carry free indices _a _b _c _d, ^i1..^in and ^j1..^jm");
  std::set<int> ab{label("a"), label("b")}, cd{label("c"), label("d")}, is, js;
  for (int k = 1; k <= s.n; ++k) is.insert(label(nth("i", k)));
  for (int k = 1; k <= s.m; ++k) js.insert(label(nth("j", k)));
  Expr Bs = simplify_metric(s.B, ctx.dim);
  for (const auto& t : Bs.terms)
    for (const auto& F : t.f) {
      if (F.sym != S::g) continue;
      int x = F.s[0].id, y = F.s[1].id;
      auto bad = [&](const std::set<int>& P, const std::set<int>& Q) {
        return (P.count(x) && Q.count(y)) || (P.count(y) && Q.count(x));
      };
      if (bad(ab, js) || bad(cd, is))
        throw SpecError("kinetic_mod: B contracts " + label_name(x) + " with " + label_name(y) +
                        " (forbidden contraction between a momentum pair and the other momentum's derivatives)");
    }
  if (s.n == s.m) {
    // exchange symmetry B^{i.. j..}_{cdab} = B^{j.. i..}_{abcd}
    Expr sw = s.B;
    std::vector<std::pair<int, int>> pairs{{label("a"), label("c")}, {label("b"), label("d")}};
    for (int k = 1; k <= s.n; ++k) pairs.push_back({label(nth("i", k)), label(nth("j", k))});
    for (auto& t : sw.terms)
      for (auto [p, q] : pairs) {
        int tmp = fresh_label();
        rename_label(t, p, tmp);
        rename_label(t, q, p);
        rename_label(t, tmp, q);
      }
    if (!equal(expand_dewitt(sw, ctx), expand_dewitt(s.B, ctx), ctx.dim))
      throw SpecError("kinetic_mod: B lacks the exchange symmetry (a b i) <-> (c d j) required for n = m");
  }
}

SmearedFunctional make_constraint(const ConstraintSpec& s, int smearing, const Context& ctx) {
  bool vec = is_vector(s);
  if (vec != (sym(smearing).nslots == 1))
    throw SpecError("smearing '" + sym(smearing).name + "' does not match the constraint's index signature");
  Expr sm = vec ? ex({fac(smearing, {up("a")})}) : scalar_of(smearing);
  auto out = make_constraint_with(s, sm, ctx);
  out.smearing = smearing;
  return out;
}

SmearedFunctional make_constraint_with(const ConstraintSpec& s, const Expr& smearing_expr, const Context& ctx) {
  check_spec(s, ctx);
  SmearedFunctional F;
  F.label = s.label;
  F.density = smearing_expr * spec_density(s, ctx);
  for (const auto& t : F.density.terms) validate(t);
  if (!free_signature(F.density).empty()) throw SpecError("smeared density is not a scalar");
  return F;
}

Expr poisson_bracket(const SmearedFunctional& A, const SmearedFunctional& B, const Context& ctx) {
  Index a{fresh_label(), false}, b{fresh_label(), false};
  Expr ag = functional_derivative(A.density, Wrt::metric, a, b, ctx);
  Expr bp = functional_derivative(B.density, Wrt::momentum, a, b, ctx);
  Expr bg = functional_derivative(B.density, Wrt::metric, a, b, ctx);
  Expr ap = functional_derivative(A.density, Wrt::momentum, a, b, ctx);
  return normalize(ag * bp - bg * ap, ctx);
}

Expr antisymmetrized_bracket(const ConstraintSpec& A, const ConstraintSpec& B, int f, int h, const Context& ctx) {
  Expr x = poisson_bracket(make_constraint(A, f, ctx), make_constraint(B, h, ctx), ctx);
  Expr y = poisson_bracket(make_constraint(A, h, ctx), make_constraint(B, f, ctx), ctx);
  return normalize(x - y, ctx);
}

Expr localize(const Expr& e, int which, const Context& ctx, const std::string& free_label) {
  Expr out;
  for (auto t : e.terms) {
    rename_dummies_fresh(t);
    int k = -1, n = 0;
    for (std::size_t j = 0; j < t.f.size(); ++j)
      if (t.f[j].sym == which) {
        k = static_cast<int>(j);
        ++n;
      }
    if (n != 1) throw StructureError("localize: each term must contain '" + sym(which).name + "' exactly once");
    if (!t.f[k].d.empty())
      throw StructureError("localize: derivatives remain on '" + sym(which).name + "'; integrate by parts first");
    Factor F = t.f[k];
    t.f.erase(t.f.begin() + k);
    if (!F.s.empty()) {
      // the freed index takes the variance dual to the smearing's natural one
      bool want = !sym(which).up[0];
      bool have = !F.s[0].up;
      if (want == have) {
        rename_label(t, F.s[0].id, label(free_label));
      } else {
        t.f.push_back(fac(S::g, {Index{label(free_label), want}, F.s[0]}));
      }
    }
    out.terms.push_back(std::move(t));
  }
  return normalize(out, ctx);
}

Expr local_form(const Expr& e, int which, const Context& ctx, const std::string& free_label) {
  return localize(integrate_by_parts(e, which, ctx, false).e, which, ctx, free_label);
}

nlohmann::json spec_to_json(const ConstraintSpec& s) {
  nlohmann::json j{{"kind", kind_name(s.kind)}, {"label", s.label}};
  switch (s.kind) {
    case ConstraintKind::kinetic_mod:
      j["B"] = render_text(s.B);
      j["n"] = s.n;
      j["m"] = s.m;
      break;
    case ConstraintKind::potential_mod: j["V"] = render_text(s.V); break;
    case ConstraintKind::linear_mod: j["beta"] = render_text(s.beta); break;
    case ConstraintKind::custom: j["density"] = render_text(s.density); break;
    default: break;
  }
  return j;
}

namespace {
Expr expr_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw SpecError(std::string("constraint spec is missing '") + key + "'");
  const auto& v = j.at(key);
  return v.is_string() ? parse(v.get<std::string>()) : from_json(v);
}
}  // namespace

ConstraintSpec spec_from_json(const nlohmann::json& j) {
  ConstraintSpec s;
  s.kind = kind_from_name(j.at("kind").get<std::string>());
  s.label = j.value("label", std::string(kind_name(s.kind)));
  switch (s.kind) {
    case ConstraintKind::kinetic_mod:
      s.B = expr_field(j, "B");
      s.n = j.value("n", 0);
      s.m = j.value("m", 0);
      break;
    case ConstraintKind::potential_mod: s.V = expr_field(j, "V"); break;
    case ConstraintKind::linear_mod: s.beta = expr_field(j, "beta"); break;
    case ConstraintKind::custom: s.density = expr_field(j, "density"); break;
    default: break;
  }
  return s;
}

nlohmann::json manifest_to_json(const std::vector<ConstraintSpec>& specs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : specs) arr.push_back(spec_to_json(s));
  return {{"constraints", arr}};
}

std::vector<ConstraintSpec> manifest_from_json(const nlohmann::json& j) {
  std::vector<ConstraintSpec> out;
  for (const auto& c : j.at("constraints")) out.push_back(spec_from_json(c));
  return out;
}

}  // namespace cg
