#include "cg/expr.hpp"

#include <algorithm>
#include <atomic>
#include <deque>
#include <map>
#include <mutex>
#include <unordered_map>

namespace cg {

namespace {
struct Interner {
  std::mutex mu;
  std::deque<std::string> names;
  std::unordered_map<std::string, int> ids;
};
Interner& interner() {
  static Interner in;
  return in;
}
std::atomic<int> fresh_counter{0};
}  // namespace

int label(const std::string& name) {
  auto& in = interner();
  std::lock_guard lk(in.mu);
  auto it = in.ids.find(name);
  if (it != in.ids.end()) return it->second;
  int id = static_cast<int>(in.names.size());
  in.names.push_back(name);
  in.ids.emplace(name, id);
  return id;
}

const std::string& label_name(int id) {
  static const std::string canon = "#";
  if (id < 0) return canon;
  auto& in = interner();
  std::lock_guard lk(in.mu);
  return in.names.at(id);
}

int fresh_label() { return label("~" + std::to_string(fresh_counter.fetch_add(1))); }

Expr::Expr(Term t) {
  if (!t.c.is_zero()) terms.push_back(std::move(t));
}

Expr Expr::scalar(Rational c) {
  Term t;
  t.c = c;
  return Expr(t);
}

Expr& Expr::operator+=(const Expr& o) {
  terms.insert(terms.end(), o.terms.begin(), o.terms.end());
  return *this;
}
Expr& Expr::operator-=(const Expr& o) {
  for (auto t : o.terms) {
    t.c = -t.c;
    terms.push_back(std::move(t));
  }
  return *this;
}
Expr& Expr::operator*=(const Rational& r) {
  if (r.is_zero()) {
    terms.clear();
    return *this;
  }
  for (auto& t : terms) t.c *= r;
  return *this;
}

Expr operator+(Expr a, const Expr& b) { return a += b; }
Expr operator-(Expr a, const Expr& b) { return a -= b; }
Expr operator-(Expr a) { return a *= Rational(-1); }
Expr operator*(Rational r, Expr e) { return e *= r; }

Expr operator*(const Expr& a, const Expr& b) {
  Expr out;
  out.terms.reserve(a.terms.size() * b.terms.size());
  for (const auto& x : a.terms)
    for (const auto& y : b.terms) out.terms.push_back(mul_terms(x, y));
  return out;
}

Factor fac(int s, std::vector<Index> slots, std::vector<Index> derivs) {
  if (static_cast<int>(slots.size()) != sym(s).nslots)
    throw StructureError("arity mismatch for symbol '" + sym(s).name + "'");
  return Factor{s, std::move(derivs), std::move(slots)};
}

Expr ex(Rational c, std::vector<Factor> fs, int wpow, int dimpow) {
  Term t;
  t.c = c;
  t.f = std::move(fs);
  t.wpow = wpow;
  t.dimpow = dimpow;
  return Expr(std::move(t));
}
Expr ex(std::vector<Factor> fs, int wpow) { return ex(Rational(1), std::move(fs), wpow, 0); }
Expr metric(Index a, Index b) { return ex({fac(S::g, {a, b})}); }

namespace {
template <class Fn>
void for_each_index(const Term& t, Fn fn) {
  for (int k = 0; k < static_cast<int>(t.f.size()); ++k) {
    const auto& F = t.f[k];
    for (int p = 0; p < static_cast<int>(F.d.size()); ++p) fn(F.d[p], Occ{k, true, p});
    for (int p = 0; p < static_cast<int>(F.s.size()); ++p) fn(F.s[p], Occ{k, false, p});
  }
}
std::map<int, int> label_counts(const Term& t) {
  std::map<int, int> m;
  for_each_index(t, [&](const Index& i, Occ) { ++m[i.id]; });
  return m;
}
}  // namespace

std::vector<Occ> occurrences(const Term& t, int id) {
  std::vector<Occ> out;
  for_each_index(t, [&](const Index& i, Occ o) {
    if (i.id == id) out.push_back(o);
  });
  return out;
}

std::vector<Index> free_indices(const Term& t) {
  auto counts = label_counts(t);
  std::vector<Index> out;
  for_each_index(t, [&](const Index& i, Occ) {
    if (counts[i.id] == 1) out.push_back(i);
  });
  std::sort(out.begin(), out.end(), [](const Index& a, const Index& b) {
    const auto& na = label_name(a.id);
    const auto& nb = label_name(b.id);
    if (na != nb) return na < nb;
    return a.up < b.up;
  });
  return out;
}

std::vector<int> dummy_labels(const Term& t) {
  std::vector<int> out;
  for (auto [id, n] : label_counts(t))
    if (n == 2) out.push_back(id);
  return out;
}

std::vector<Index> free_signature(const Expr& e) {
  if (e.terms.empty()) return {};
  auto sig = free_indices(e.terms[0]);
  for (const auto& t : e.terms)
    if (free_indices(t) != sig) throw StructureError("terms of an expression carry different free indices");
  return sig;
}

void validate(const Term& t) {
  std::map<int, std::vector<bool>> seen;
  for_each_index(t, [&](const Index& i, Occ) { seen[i.id].push_back(i.up); });
  for (const auto& [id, v] : seen) {
    if (v.size() >= 3) throw StructureError("index label '" + label_name(id) + "' occurs more than twice");
    if (v.size() == 2 && v[0] == v[1]) throw StructureError("variance clash on index label '" + label_name(id) + "'");
  }
  for (const auto& F : t.f)
    if (static_cast<int>(F.s.size()) != sym(F.sym).nslots)
      throw StructureError("arity mismatch for symbol '" + sym(F.sym).name + "'");
}

void rename_label(Term& t, int from, int to) {
  for (auto& F : t.f) {
    for (auto& i : F.d)
      if (i.id == from) i.id = to;
    for (auto& i : F.s)
      if (i.id == from) i.id = to;
  }
}

void rename_dummies_fresh(Term& t) {
  for (int id : dummy_labels(t)) rename_label(t, id, fresh_label());
}

Term mul_terms(const Term& a, const Term& b) {
  auto ca = label_counts(a);
  auto cb = label_counts(b);
  Term x = a, y = b;
  for (auto [id, n] : cb)
    if (n == 2 && ca.count(id)) rename_label(y, id, fresh_label());
  for (auto [id, n] : ca)
    if (n == 2 && cb.count(id)) rename_label(x, id, fresh_label());
  Term out;
  out.c = a.c * b.c;
  out.f = std::move(x.f);
  out.f.insert(out.f.end(), y.f.begin(), y.f.end());
  out.dimpow = a.dimpow + b.dimpow;
  out.wpow = a.wpow + b.wpow;
  return out;
}

bool term_less_structure(const Term& a, const Term& b) {
  if (a.f != b.f) return a.f < b.f;
  if (a.dimpow != b.dimpow) return a.dimpow < b.dimpow;
  return a.wpow < b.wpow;
}

bool same_structure(const Term& a, const Term& b) {
  return a.dimpow == b.dimpow && a.wpow == b.wpow && a.f == b.f;
}

Expr collect(std::vector<Term> ts) {
  std::sort(ts.begin(), ts.end(), term_less_structure);
  Expr out;
  for (auto& t : ts) {
    if (!out.terms.empty() && same_structure(out.terms.back(), t)) {
      out.terms.back().c += t.c;
    } else {
      out.terms.push_back(std::move(t));
    }
  }
  std::erase_if(out.terms, [](const Term& t) { return t.c.is_zero(); });
  return out;
}

bool identical(const Expr& a, const Expr& b) {
  if (a.terms.size() != b.terms.size()) return false;
  for (std::size_t i = 0; i < a.terms.size(); ++i)
    if (!same_structure(a.terms[i], b.terms[i]) || a.terms[i].c != b.terms[i].c) return false;
  return true;
}

int momentum_power(const Term& t) {
  int p = 0;
  for (const auto& F : t.f) p += sym(F.sym).momentum_grade;
  return p;
}

int derivative_degree(const Term& t) {
  int d = 0;
  for (const auto& F : t.f) d += static_cast<int>(F.d.size()) + sym(F.sym).deriv_degree;
  return d;
}

int count_symbol(const Term& t, int s) {
  int n = 0;
  for (const auto& F : t.f) n += F.sym == s;
  return n;
}

int smearing_derivs(const Term& t) {
  int n = 0;
  for (const auto& F : t.f)
    if (sym(F.sym).vclass == VarClass::smearing) n += static_cast<int>(F.d.size());
  return n;
}

bool contains_symbol(const Expr& e, int s) {
  for (const auto& t : e.terms)
    if (count_symbol(t, s)) return true;
  return false;
}

}  // namespace cg
