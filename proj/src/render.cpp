#include "cg/render.hpp"

#include <sstream>

#include "cg/parse.hpp"

namespace cg {

namespace {

std::string idx_name(int id) { return id < 0 ? "#" + std::to_string(-1 - id) : label_name(id); }
std::string idx_text(const Index& i) { return (i.up ? "^" : "_") + idx_name(i.id); }
// canonical dummies become Greek letters in LaTeX
std::string idx_latex(int id) {
  static const char* greek[] = {"\\alpha", "\\beta", "\\gamma", "\\delta", "\\epsilon", "\\zeta", "\\eta", "\\theta",
                                "\\kappa", "\\lambda", "\\mu", "\\nu", "\\rho", "\\sigma", "\\tau"};
  if (id >= 0) return label_name(id);
  int n = -1 - id;
  if (n < 15) return std::string(greek[n]) + " ";
  return "\\omega_{" + std::to_string(n - 15) + "}";
}

std::string factor_text(const Factor& F) {
  std::string core = sym(F.sym).name;
  if (!F.s.empty()) {
    core += "[";
    for (std::size_t k = 0; k < F.s.size(); ++k) core += (k ? " " : "") + idx_text(F.s[k]);
    core += "]";
  }
  for (auto it = F.d.rbegin(); it != F.d.rend(); ++it) core = "D(" + idx_text(*it) + ", " + core + ")";
  return core;
}

std::string latex_indices(const std::vector<Index>& v) {
  std::string out;
  std::size_t k = 0;
  while (k < v.size()) {
    bool u = v[k].up;
    std::string grp;
    while (k < v.size() && v[k].up == u) grp += idx_latex(v[k++].id);
    out += (out.empty() ? "" : "{}") + std::string(u ? "^{" : "_{") + grp + "}";
  }
  return out;
}

std::string factor_latex(const Factor& F) {
  std::string out;
  for (const auto& i : F.d) out += "\\nabla" + latex_indices({i});
  out += sym(F.sym).latex;
  if (F.sym == S::g && F.s.size() == 2 && F.s[0].up != F.s[1].up) out = out.substr(0, out.size() - 1) + "\\delta";
  out += latex_indices(F.s);
  return out;
}

}  // namespace

std::string render_term_text(const Term& t) {
  std::vector<std::string> parts;
  Rational a = t.c.sign() < 0 ? -t.c : t.c;
  if (a != Rational(1) || (t.f.empty() && t.wpow == 0 && t.dimpow == 0)) parts.push_back(a.str());
  for (int k = 0; k < std::abs(t.dimpow); ++k) parts.push_back(t.dimpow > 0 ? "dim" : "idim");
  for (int k = 0; k < std::abs(t.wpow); ++k) parts.push_back(t.wpow > 0 ? "sqrtg" : "isqrtg");
  for (const auto& F : t.f) parts.push_back(factor_text(F));
  std::string out;
  for (std::size_t k = 0; k < parts.size(); ++k) out += (k ? " * " : "") + parts[k];
  return out;
}

std::string render_text(const Expr& e) {
  if (e.is_zero()) return "0";
  std::string out;
  for (std::size_t k = 0; k < e.terms.size(); ++k) {
    bool neg = e.terms[k].c.sign() < 0;
    if (k == 0) {
      out += neg ? "-" : "";
    } else {
      out += neg ? " - " : " + ";
    }
    out += render_term_text(e.terms[k]);
  }
  return out;
}

std::string render_latex(const Expr& e) {
  if (e.is_zero()) return "0";
  std::string out;
  for (std::size_t k = 0; k < e.terms.size(); ++k) {
    const Term& t = e.terms[k];
    bool neg = t.c.sign() < 0;
    out += k == 0 ? (neg ? "-" : "") : (neg ? " - " : " + ");
    Rational a = neg ? -t.c : t.c;
    std::string body;
    if (t.dimpow > 0) body += t.dimpow == 1 ? "d\\," : "d^{" + std::to_string(t.dimpow) + "}\\,";
    if (t.wpow > 0) body += t.wpow == 1 ? "\\sqrt{g}\\," : "g^{" + std::to_string(t.wpow) + "/2}\\,";
    for (const auto& F : t.f) body += factor_latex(F) + " ";
    if (!body.empty() && body.back() == ' ') body.pop_back();
    std::string den;
    if (t.dimpow < 0) den += t.dimpow == -1 ? "d" : "d^{" + std::to_string(-t.dimpow) + "}";
    if (t.wpow < 0) den += t.wpow == -1 ? "\\sqrt{g}" : "g^{" + std::to_string(-t.wpow) + "/2}";
    std::string coef;
    if (a.den() != 1 || !den.empty()) {
      std::string dd = (a.den() != 1 ? std::to_string(a.den()) : "") + den;
      coef = "\\frac{" + std::to_string(a.num()) + "}{" + dd + "}";
    } else if (a != Rational(1) || body.empty()) {
      coef = a.str();
    }
    out += coef + (coef.empty() || body.empty() ? "" : "\\,") + body;
  }
  return out;
}

nlohmann::json to_json(const Expr& e) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : e.terms) {
    nlohmann::json fs = nlohmann::json::array();
    for (int k = 0; k < std::abs(t.wpow); ++k)
      fs.push_back({{"sym", t.wpow > 0 ? "sqrtg" : "isqrtg"}, {"derivs", nlohmann::json::array()},
                    {"slots", nlohmann::json::array()}});
    for (const auto& F : t.f) {
      nlohmann::json d = nlohmann::json::array(), s = nlohmann::json::array();
      for (const auto& i : F.d) d.push_back(idx_text(i));
      for (const auto& i : F.s) s.push_back(idx_text(i));
      fs.push_back({{"sym", sym(F.sym).name}, {"derivs", d}, {"slots", s}});
    }
    terms.push_back({{"coeff", t.c.str_pq()}, {"dimpow", t.dimpow}, {"factors", fs}});
  }
  return {{"terms", terms}};
}

Expr from_json(const nlohmann::json& j) {
  auto idx = [](const std::string& s) {
    if (s.size() < 2 || (s[0] != '^' && s[0] != '_')) throw ParseError(ParseCode::syntax, 0, 0, "bad index '" + s + "'");
    return Index{label(s.substr(1)), s[0] == '^'};
  };
  Expr out;
  for (const auto& jt : j.at("terms")) {
    Term t;
    t.c = Rational::parse(jt.at("coeff").get<std::string>());
    t.dimpow = jt.value("dimpow", 0);
    for (const auto& jf : jt.at("factors")) {
      std::string name = jf.at("sym").get<std::string>();
      if (name == "sqrtg" || name == "isqrtg") {
        t.wpow += name == "sqrtg" ? 1 : -1;
        continue;
      }
      int id = Registry::instance().find(name);
      if (id < 0) throw ParseError(ParseCode::unknown_symbol, 0, 0, "unknown symbol '" + name + "'");
      Factor F;
      F.sym = id;
      for (const auto& s : jf.value("derivs", nlohmann::json::array())) F.d.push_back(idx(s.get<std::string>()));
      for (const auto& s : jf.value("slots", nlohmann::json::array())) F.s.push_back(idx(s.get<std::string>()));
      if (static_cast<int>(F.s.size()) != sym(id).nslots)
        throw ParseError(ParseCode::arity, 0, 0, "arity mismatch for '" + name + "'");
      t.f.push_back(std::move(F));
    }
    validate(t);
    out.terms.push_back(std::move(t));
  }
  return out;
}

std::string render(const Expr& e, Format f) {
  switch (f) {
    case Format::text: return render_text(e);
    case Format::latex: return render_latex(e);
    case Format::json: return to_json(e).dump(2);
  }
  return {};
}

}  // namespace cg
