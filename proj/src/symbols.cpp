#include "cg/symbols.hpp"

#include <map>
#include <stdexcept>

namespace cg {

std::vector<SlotPerm> close_group(int nslots, const std::vector<SlotPerm>& gens) {
  SlotPerm id;
  for (int i = 0; i < nslots; ++i) id.p.push_back(i);
  std::map<std::vector<int>, int> seen{{id.p, 1}};
  std::vector<SlotPerm> out{id};
  for (const auto& gp : gens)
    if (static_cast<int>(gp.p.size()) != nslots) throw std::invalid_argument("generator arity mismatch");
  for (std::size_t k = 0; k < out.size(); ++k) {
    for (const auto& gp : gens) {
      SlotPerm c;
      c.p.resize(nslots);
      // apply gp after out[k]
      for (int i = 0; i < nslots; ++i) c.p[i] = out[k].p[gp.p[i]];
      c.sign = out[k].sign * gp.sign;
      auto it = seen.find(c.p);
      if (it == seen.end()) {
        seen.emplace(c.p, c.sign);
        out.push_back(c);
      } else if (it->second != c.sign) {
        throw std::invalid_argument("symmetry generators are inconsistent (tensor would vanish)");
      }
    }
  }
  return out;
}

Registry& Registry::instance() {
  static Registry r;
  return r;
}

int Registry::add(Symbol s, const std::vector<SlotPerm>& generators) {
  std::lock_guard lk(mu_);
  if (by_name_.count(s.name)) throw std::invalid_argument("symbol '" + s.name + "' already registered");
  if (static_cast<int>(s.up.size()) != s.nslots) throw std::invalid_argument("variance list arity mismatch");
  s.group = close_group(s.nslots, generators);
  s.id = static_cast<int>(syms_.size());
  if (s.order == 0 && s.id != 0) s.order = 1000 + s.id;
  if (s.latex.empty()) s.latex = s.name;
  by_name_[s.name] = s.id;
  syms_.push_back(std::move(s));
  return syms_.back().id;
}

int Registry::find(std::string_view name) const {
  std::lock_guard lk(mu_);
  auto it = by_name_.find(std::string(name));
  return it == by_name_.end() ? -1 : it->second;
}

namespace {
Symbol mk(const std::string& name, std::vector<bool> up, VarClass vc, int order, const std::string& latex,
          int dd = 0, int mg = 0, bool cc = false) {
  Symbol s;
  s.name = name;
  s.latex = latex;
  s.nslots = static_cast<int>(up.size());
  s.up = std::move(up);
  s.vclass = vc;
  s.order = order;
  s.deriv_degree = dd;
  s.momentum_grade = mg;
  s.cov_const = cc;
  return s;
}
const SlotPerm sw01{{1, 0}, 1};
}  // namespace

Registry::Registry() {
  const SlotPerm r1{{1, 0, 2, 3}, -1}, r2{{0, 1, 3, 2}, -1}, r3{{2, 3, 0, 1}, 1}, r1p{{1, 0, 2, 3}, 1},
      r2p{{0, 1, 3, 2}, 1};
  auto add_checked = [&](Symbol s, std::vector<SlotPerm> gens, int expect) {
    int id = add(std::move(s), gens);
    if (id != expect) throw std::logic_error("built-in symbol id drift");
  };
  add_checked(mk("g", {false, false}, VarClass::metric, 0, "g", 0, 0, true), {sw01}, S::g);
  add_checked(mk("pi", {true, true}, VarClass::momentum, 20, "\\pi", 0, 1), {sw01}, S::pi);
  add_checked(mk("dpi", {true, true}, VarClass::formal, 30, "\\delta\\pi"), {sw01}, S::dpi);
  add_checked(mk("dg", {false, false}, VarClass::formal, 31, "\\delta g"), {sw01}, S::dg);
  add_checked(mk("R", {}, VarClass::metric_built, 10, "R", 2), {}, S::R);
  add_checked(mk("Ricci", {false, false}, VarClass::metric_built, 40, "R", 2), {sw01}, S::Ricci);
  add_checked(mk("Riem", {true, false, false, false}, VarClass::metric_built, 100000, "R", 2), {r1, r2, r3},
              S::Riem);
  add_checked(mk("G", {false, false, false, false}, VarClass::metric_built, 50, "G", 0, 0, true), {r1p, r2p, r3},
              S::G);
  add_checked(mk("Ginv", {true, true, true, true}, VarClass::metric_built, 51, "G", 0, 0, true), {r1p, r2p, r3},
              S::Ginv);
  add_checked(mk("Lambda", {}, VarClass::constant, 1, "\\Lambda", 0, 0, true), {}, S::Lambda);
  add_checked(mk("c", {}, VarClass::constant, 2, "c", 0, 0, true), {}, S::c);
  add_checked(mk("alpha", {}, VarClass::constant, 3, "\\alpha", 0, 0, true), {}, S::alpha);
  add_checked(mk("f", {}, VarClass::smearing, 60, "f"), {}, S::f);
  add_checked(mk("h", {}, VarClass::smearing, 61, "h"), {}, S::h);
  add_checked(mk("N", {}, VarClass::smearing, 62, "N"), {}, S::N);
  add_checked(mk("M", {}, VarClass::smearing, 63, "M"), {}, S::M);
  add_checked(mk("xi", {true}, VarClass::smearing, 64, "\\xi"), {}, S::xi);
  add_checked(mk("eta", {true}, VarClass::smearing, 65, "\\eta"), {}, S::eta);
  add_checked(mk("u", {false, false}, VarClass::smearing, 66, "u"), {sw01}, S::u);
  add_checked(mk("v", {false, false}, VarClass::smearing, 67, "v"), {sw01}, S::v);
  add_checked(mk("V", {true}, VarClass::field, 70, "V"), {}, S::V);
  add_checked(mk("A", {true, true}, VarClass::field, 71, "A"), {SlotPerm{{1, 0}, -1}}, S::A);
  add_checked(mk("S", {false, false}, VarClass::field, 72, "S"), {sw01}, S::Sym);
  add_checked(mk("T", {false, false}, VarClass::field, 73, "T"), {}, S::T);
  add_checked(mk("phi", {}, VarClass::field, 74, "\\phi"), {}, S::phi);
  add_checked(mk("beta", {false, false}, VarClass::field, 75, "\\beta"), {sw01}, S::beta);
  add_checked(mk("W", {true, true}, VarClass::field, 76, "W"), {sw01}, S::W);
}

}  // namespace cg
