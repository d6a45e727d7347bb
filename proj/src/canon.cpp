#include "cg/canon.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace cg {

namespace {

constexpr int kDummyBase = 1 << 20;
constexpr long kLeafCap = 2000000;

struct Form {
  std::vector<int> lab;       // local label per position (prefix then slots)
  std::vector<bool> upv;
  std::vector<int> dperm;
  int sign = 1;
};

struct Search {
  const Term* t = nullptr;
  const CanonOptions* opt = nullptr;
  int nfac = 0;
  std::vector<std::vector<Form>> forms;
  std::vector<bool> is_free;
  std::vector<int> free_rank;
  int nlab = 0;

  // state
  std::vector<int> rank;  // per local label, -1 unassigned
  std::vector<bool> used;
  std::vector<int> acc;
  std::vector<std::pair<int, int>> choice;  // (factor, form)
  int next = 0;
  int sign = 1;

  // result
  bool have = false;
  std::vector<int> best;
  std::vector<std::pair<int, int>> best_choice;
  int best_sign = 1;
  bool zero = false;
  bool have2 = false;
  std::vector<std::pair<int, int>> choice2;
  long leaves = 0;

  void segment(int fi, const Form& fm, std::vector<int>& out) const {
    const Factor& F = t->f[fi];
    out.clear();
    out.push_back(sym(F.sym).order);
    out.push_back(static_cast<int>(F.d.size()));
    out.push_back(static_cast<int>(F.s.size()));
    int k = 0;
    std::vector<std::pair<int, int>> prov;
    for (std::size_t p = 0; p < fm.lab.size(); ++p) {
      int L = fm.lab[p];
      bool u = fm.upv[p];
      if (is_free[L]) {
        out.push_back(1 + 2 * free_rank[L] + (u ? 1 : 0));
        continue;
      }
      int r = rank[L];
      if (r < 0) {
        auto it = std::find_if(prov.begin(), prov.end(), [&](auto& q) { return q.first == L; });
        if (it == prov.end()) {
          prov.push_back({L, next + k});
          r = next + k++;
        } else {
          r = it->second;
        }
      }
      out.push_back(kDummyBase + 2 * r + (opt->metric_normal ? 0 : (u ? 1 : 0)));
    }
  }

  void assign(const Form& fm, std::vector<int>& newly) {
    for (int L : fm.lab)
      if (!is_free[L] && rank[L] < 0) {
        rank[L] = next++;
        newly.push_back(L);
      }
  }

  void leaf() {
    ++leaves;
    if (!have || acc < best) {
      have = true;
      best = acc;
      best_choice = choice;
      best_sign = sign;
      zero = false;
      have2 = false;
      return;
    }
    if (acc == best && sign != best_sign) {
      if (!opt->commute) {
        zero = true;
      } else if (!have2) {
        have2 = true;
        choice2 = choice;
      }
    }
  }

  void dfs(int depth) {
    if (leaves > kLeafCap) throw std::runtime_error("canonicalization search exceeded its leaf budget");
    if (depth == nfac) {
      leaf();
      return;
    }
    std::vector<int> seg, minseg;
    std::vector<std::pair<int, int>> ties;
    for (int i = 0; i < nfac; ++i) {
      if (used[i]) continue;
      for (int k = 0; k < static_cast<int>(forms[i].size()); ++k) {
        segment(i, forms[i][k], seg);
        if (ties.empty() || seg < minseg) {
          minseg = seg;
          ties.clear();
          ties.push_back({i, k});
        } else if (seg == minseg) {
          ties.push_back({i, k});
        }
      }
    }
    // prune against the best leaf found so far
    if (have) {
      std::size_t n = std::min(acc.size(), best.size());
      auto cmp = std::lexicographical_compare_three_way(acc.begin(), acc.begin() + n, best.begin(), best.begin() + n);
      if (cmp == 0) {
        std::size_t m = std::min(best.size() - n, minseg.size());
        cmp = std::lexicographical_compare_three_way(minseg.begin(), minseg.begin() + m, best.begin() + n,
                                                     best.begin() + n + m);
      }
      if (cmp > 0) return;
    }
    for (auto [i, k] : ties) {
      const Form& fm = forms[i][k];
      std::vector<int> newly;
      int saved_next = next;
      assign(fm, newly);
      used[i] = true;
      std::size_t asz = acc.size();
      acc.insert(acc.end(), minseg.begin(), minseg.end());
      choice.push_back({i, k});
      int saved_sign = sign;
      sign *= fm.sign;
      dfs(depth + 1);
      sign = saved_sign;
      choice.pop_back();
      acc.resize(asz);
      used[i] = false;
      for (int L : newly) rank[L] = -1;
      next = saved_next;
      if (zero) return;
    }
  }
};

std::vector<std::vector<int>> prefix_perms(const Factor& F, bool commute) {
  int n = static_cast<int>(F.d.size());
  std::vector<int> id(n);
  std::iota(id.begin(), id.end(), 0);
  std::vector<std::vector<int>> out;
  if (commute) {
    if (n > 7) throw std::runtime_error("derivative prefix too long for commutation canonicalization");
    auto p = id;
    do out.push_back(p);
    while (std::next_permutation(p.begin(), p.end()));
    return out;
  }
  out.push_back(id);
  if (sym(F.sym).nslots == 0 && n >= 2) {
    auto p = id;
    std::swap(p[n - 1], p[n - 2]);
    out.push_back(p);
  }
  return out;
}

CanonLeaf make_leaf(const Search& s, const std::vector<std::pair<int, int>>& ch, int sign) {
  CanonLeaf L;
  L.sign = sign;
  for (auto [i, k] : ch) {
    L.order.push_back(i);
    L.dperm.push_back(s.forms[i][k].dperm);
  }
  return L;
}

}  // namespace

CanonResult canon_search(const Term& t, const CanonOptions& opt) {
  validate(t);
  CanonResult res;
  for (const auto& F : t.f)
    if (sym(F.sym).cov_const && !F.d.empty()) {
      res.zero = true;
      return res;
    }
  // local labels
  std::vector<int> ids;
  for (const auto& F : t.f) {
    for (auto& i : F.d) ids.push_back(i.id);
    for (auto& i : F.s) ids.push_back(i.id);
  }
  std::sort(ids.begin(), ids.end());
  std::vector<int> uniq = ids;
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  auto local = [&](int id) { return static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), id) - uniq.begin()); };

  Search s;
  s.t = &t;
  s.opt = &opt;
  s.nfac = static_cast<int>(t.f.size());
  s.nlab = static_cast<int>(uniq.size());
  s.is_free.assign(s.nlab, false);
  s.free_rank.assign(s.nlab, -1);
  std::vector<int> cnt(s.nlab, 0);
  for (int id : ids) ++cnt[local(id)];
  std::vector<int> frees;
  for (int L = 0; L < s.nlab; ++L)
    if (cnt[L] == 1) {
      s.is_free[L] = true;
      frees.push_back(L);
    }
  std::sort(frees.begin(), frees.end(),
            [&](int a, int b) { return label_name(uniq[a]) < label_name(uniq[b]); });
  for (std::size_t r = 0; r < frees.size(); ++r) s.free_rank[frees[r]] = static_cast<int>(r);

  s.forms.resize(s.nfac);
  for (int i = 0; i < s.nfac; ++i) {
    const Factor& F = t.f[i];
    const Symbol& S = sym(F.sym);
    for (const auto& tau : prefix_perms(F, opt.commute)) {
      for (const auto& sg : S.group) {
        Form fm;
        fm.dperm = tau;
        fm.sign = sg.sign;
        for (int k : tau) {
          fm.lab.push_back(local(F.d[k].id));
          fm.upv.push_back(F.d[k].up);
        }
        for (int k : sg.p) {
          fm.lab.push_back(local(F.s[k].id));
          fm.upv.push_back(F.s[k].up);
        }
        s.forms[i].push_back(std::move(fm));
      }
    }
  }
  s.rank.assign(s.nlab, -1);
  s.used.assign(s.nfac, false);
  s.dfs(0);

  if (s.zero) {
    res.zero = true;
    return res;
  }
  res.leaf = make_leaf(s, s.best_choice, s.best_sign);
  if (s.have2) {
    res.antisym = true;
    res.leaf2 = make_leaf(s, s.choice2, -s.best_sign);
  }

  // build representative
  Term out;
  out.c = t.c * Rational(s.best_sign);
  out.dimpow = t.dimpow;
  out.wpow = t.wpow;
  std::vector<int> rank(s.nlab, -1);
  int next = 0;
  std::vector<int> seen_count(s.nlab, 0);
  for (auto [i, k] : s.best_choice) {
    const Factor& F = t.f[i];
    const Form& fm = s.forms[i][k];
    Factor G;
    G.sym = F.sym;
    std::size_t nd = F.d.size();
    for (std::size_t p = 0; p < fm.lab.size(); ++p) {
      int L = fm.lab[p];
      Index ix;
      if (s.is_free[L]) {
        ix = {uniq[L], fm.upv[p]};
      } else {
        if (rank[L] < 0) rank[L] = next++;
        ix.id = -1 - rank[L];
        ix.up = opt.metric_normal ? (seen_count[L] == 0) : fm.upv[p];
        ++seen_count[L];
      }
      (p < nd ? G.d : G.s).push_back(ix);
    }
    out.f.push_back(std::move(G));
  }
  if (opt.dim > 0 && out.dimpow != 0) {
    Rational m(1);
    for (int k = 0; k < std::abs(out.dimpow); ++k) m *= Rational(opt.dim);
    out.c = out.dimpow > 0 ? out.c * m : out.c / m;
    out.dimpow = 0;
  }
  res.term = std::move(out);
  return res;
}

std::optional<Term> canonicalize_term(const Term& t, const CanonOptions& opt) {
  if (t.c.is_zero()) return std::nullopt;
  auto r = canon_search(t, opt);
  if (r.zero) return std::nullopt;
  return r.term;
}

Expr canonicalize(const Expr& e, const CanonOptions& opt) {
  std::vector<Term> ts;
  ts.reserve(e.terms.size());
  for (const auto& t : e.terms)
    if (auto c = canonicalize_term(t, opt)) ts.push_back(std::move(*c));
  return collect(std::move(ts));
}

std::optional<Term> contract_metrics(Term t) {
  validate(t);
  for (;;) {
    bool changed = false;
    for (std::size_t k = 0; k < t.f.size() && !changed; ++k) {
      if (t.f[k].sym != S::g) continue;
      if (!t.f[k].d.empty()) return std::nullopt;
      Index a = t.f[k].s[0], b = t.f[k].s[1];
      if (a.id == b.id) {
        t.f.erase(t.f.begin() + static_cast<long>(k));
        ++t.dimpow;
        changed = true;
        break;
      }
      for (int side = 0; side < 2 && !changed; ++side) {
        Index x = side == 0 ? a : b;
        Index y = side == 0 ? b : a;
        for (std::size_t m = 0; m < t.f.size() && !changed; ++m) {
          if (m == k) continue;
          for (auto* vec : {&t.f[m].d, &t.f[m].s}) {
            for (auto& ix : *vec) {
              if (ix.id == x.id) {
                ix = y;
                changed = true;
                break;
              }
            }
            if (changed) break;
          }
        }
        if (changed) t.f.erase(t.f.begin() + static_cast<long>(k));
      }
    }
    if (!changed) break;
  }
  return t;
}

Expr simplify_metric(const Expr& e, int dim) {
  std::vector<Term> ts;
  CanonOptions opt;
  opt.dim = dim;
  for (const auto& t : e.terms) {
    auto c = contract_metrics(t);
    if (!c) continue;
    if (auto r = canonicalize_term(*c, opt)) ts.push_back(std::move(*r));
  }
  return collect(std::move(ts));
}

bool equal(const Expr& a, const Expr& b, int dim) {
  std::vector<Index> sa, sb;
  try {
    sa = free_signature(simplify_metric(a, dim));
    sb = free_signature(simplify_metric(b, dim));
  } catch (const StructureError&) {
    return false;
  }
  if (!a.is_zero() && !b.is_zero() && sa != sb) return false;
  return simplify_metric(a - b, dim).is_zero();
}

Term permute_factor_slots(const Term& t, int factor, const SlotPerm& p) {
  Term out = t;
  auto& F = out.f[factor];
  std::vector<Index> ns(F.s.size());
  for (std::size_t k = 0; k < ns.size(); ++k) ns[k] = F.s[p.p[k]];
  F.s = ns;
  return out;
}

}  // namespace cg
