// canongrav: batch front end for the constraint-algebra engine.
// Exit status: 0 success, 1 computation failure, 2 usage or input error.

#include <openssl/evp.h>

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cg/classify.hpp"
#include "cg/oracle.hpp"
#include "cg/parse.hpp"
#include "cg/render.hpp"

using namespace cg;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int n = 0;
  EVP_Digest(data.data(), data.size(), md, &n, EVP_sha256(), nullptr);
  std::ostringstream o;
  for (unsigned i = 0; i < n; ++i) o << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return o.str();
}

// Conventions this build implements; a profile must state exactly these.
const json& builtin_conventions() {
  static const json j = {
      {"supermetric", "G_abcd = 1/2 (g_ac g_bd + g_ad g_bc) - g_ab g_cd / (d - 1)"},
      {"inverse_supermetric", "Ginv^abcd = 1/2 (g^ac g^bd + g^ad g^bc) - g^ab g^cd"},
      {"hamiltonian", "H(N) = int N (G_abcd pi^ab pi^cd / sqrt g - sqrt g (R - 2 Lambda))"},
      {"momentum_constraint", "H_a(xi) = -2 int xi^a g_ab nabla_c pi^cb"},
      {"riemann", "[nabla_a, nabla_b] V^c = Riem^c_dab V^d, Ricci_bd = Riem^a_bad"},
      {"functional_derivative", "dF = int K^ab dg_ab, K symmetric"},
      {"momentum_weight", 1}};
  return j;
}

struct Profile {
  std::string path, hash, name;
  json defaults;
};

Profile load_profile(const std::string& path) {
  Profile p;
  p.path = path;
  std::string text = read_file(path);
  p.hash = sha256_hex(text);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError("profile " + path + ": " + e.what());
  }
  p.name = j.value("name", "unnamed");
  const json& want = builtin_conventions();
  const json got = j.value("conventions", json::object());
  for (auto it = want.begin(); it != want.end(); ++it)
    if (!got.contains(it.key()) || got[it.key()] != it.value())
      throw UsageError("profile " + path + ": convention '" + it.key() + "' differs from the one this build implements");
  for (auto it = got.begin(); it != got.end(); ++it)
    if (!want.contains(it.key())) throw UsageError("profile " + path + ": unknown convention '" + it.key() + "'");
  p.defaults = j.value("defaults", json::object());
  return p;
}

struct Options {
  std::string profile = std::string(CG_DATA_DIR) + "/profile.json";
  int dim = 0;
  std::string format = "text";
  std::size_t max_terms = 0;
  unsigned seed = 1;
  std::string localize;
  std::string out;
  bool riemann_variation = false;
};

Format parse_format(const std::string& s) {
  if (s == "text") return Format::text;
  if (s == "latex") return Format::latex;
  return Format::json;
}

// Expression input: inline text, or a file holding grammar text or JSON
// (an expression object, or any command's JSON output with a "result" field).
Expr load_expr(const std::string& inline_text, const std::string& file) {
  if (!inline_text.empty() && !file.empty()) throw UsageError("give either an expression or --in, not both");
  if (inline_text.empty() && file.empty()) throw UsageError("no input expression");
  std::string text = file.empty() ? inline_text : read_file(file);
  auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j = json::parse(text);
    if (j.contains("result") && j["result"].is_object() && j["result"].contains("terms")) return from_json(j["result"]);
    if (j.contains("terms")) return from_json(j);
    throw UsageError("JSON input carries no expression");
  }
  return parse(text);
}

int smearing_symbol(const std::string& s) {
  static const std::map<std::string, int> m{{"f", S::f}, {"h", S::h}, {"N", S::N}, {"M", S::M}, {"xi", S::xi}, {"eta", S::eta}};
  auto it = m.find(s);
  if (it == m.end()) throw UsageError("unknown smearing '" + s + "'");
  return it->second;
}

std::vector<ConstraintSpec> load_specs(const std::string& path, int* dim_out) {
  json j = json::parse(read_file(path));
  if (j.contains("dimension") && dim_out) *dim_out = j["dimension"].get<int>();
  return manifest_from_json(j);
}

ConstraintSpec builtin_or_manifest(const std::string& name, const std::vector<ConstraintSpec>& lib) {
  for (const auto& s : lib)
    if (s.label == name) return s;
  if (name == "gr_hamiltonian" || name == "H") return gr_hamiltonian();
  if (name == "momentum_constraint" || name == "H_a") return momentum_constraint();
  if (name == "kinetic_gr") return kinetic_gr();
  if (name == "potential_gr") return potential_gr();
  throw UsageError("no constraint named '" + name + "'");
}

class Runner {
 public:
  Runner(Options o, Profile p) : opt_(std::move(o)), prof_(std::move(p)) {
    ctx_.dim = prof_.defaults.value("dimension", 3);
    ctx_.riemann_variation = prof_.defaults.value("riemann_variation", false);
    ctx_.max_terms = prof_.defaults.value("max_terms", ctx_.max_terms);
    ctx_.max_passes = prof_.defaults.value("max_passes", ctx_.max_passes);
    if (opt_.dim) ctx_.dim = opt_.dim;
    if (opt_.max_terms) ctx_.max_terms = opt_.max_terms;
    if (opt_.riemann_variation) ctx_.riemann_variation = true;
    fmt_ = parse_format(opt_.format);
  }

  Context& ctx() { return ctx_; }
  Format fmt() const { return fmt_; }

  // Final localization when --localize is given.
  Expr maybe_localize(const Expr& e) {
    if (opt_.localize.empty()) return e;
    return local_form(e, smearing_symbol(opt_.localize), ctx_);
  }

  void emit_expr(const std::string& command, const Expr& e, json extra = json::object()) {
    if (fmt_ == Format::json) {
      json j = header(command);
      j["result"] = to_json(e);
      j["text"] = render_text(e);
      for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
      write(j.dump(2) + "\n");
    } else {
      write(preamble() + render(e, fmt_) + "\n");
    }
  }

  void emit_json(const std::string& command, json payload, const std::string& text) {
    if (fmt_ == Format::json) {
      json j = header(command);
      for (auto it = payload.begin(); it != payload.end(); ++it) j[it.key()] = it.value();
      write(j.dump(2) + "\n");
    } else {
      write(preamble() + text);
    }
  }

  const Options& opt() const { return opt_; }

 private:
  json header(const std::string& command) const {
    return {{"command", command}, {"profile", {{"name", prof_.name}, {"sha256", prof_.hash}}}, {"dimension", ctx_.dim}};
  }
  std::string preamble() const {
    std::string c = fmt_ == Format::latex ? "% " : "# ";
    return c + "profile " + prof_.name + " sha256 " + prof_.hash + "\n";
  }
  void write(const std::string& s) const {
    if (opt_.out.empty()) {
      std::cout << s;
      return;
    }
    std::ofstream f(opt_.out);
    if (!f) throw UsageError("cannot write " + opt_.out);
    f << s;
  }

  Options opt_;
  Profile prof_;
  Context ctx_;
  Format fmt_;
};

std::string buckets_text(const std::vector<GradeBucket>& bs) {
  std::ostringstream o;
  for (const auto& b : bs)
    o << "bucket pi^" << b.key.pi_power << " deriv " << b.key.deriv_degree << " smearing-deriv " << b.key.smearing_derivs
      << " (" << b.terms.terms.size() << " terms): " << render_text(b.terms) << "\n";
  return o.str();
}

json buckets_json(const std::vector<GradeBucket>& bs) {
  json a = json::array();
  for (const auto& b : bs)
    a.push_back({{"pi_power", b.key.pi_power},
                 {"deriv_degree", b.key.deriv_degree},
                 {"smearing_derivs", b.key.smearing_derivs},
                 {"count", b.terms.terms.size()},
                 {"terms", to_json(b.terms)},
                 {"text", render_text(b.terms)}});
  return a;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poisson brackets and closure checks for smeared gravitational constraints"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  app.add_option("--profile", opt.profile, "convention profile (JSON)");
  app.add_option("--dim", opt.dim, "spatial dimension")->check(CLI::Range(2, 12));
  app.add_option("--format", opt.format, "output format")->check(CLI::IsMember({"text", "latex", "json"}));
  app.add_option("--max-terms", opt.max_terms, "term cap for intermediate expressions");
  app.add_option("--seed", opt.seed, "seed for numeric charts");
  app.add_option("--localize", opt.localize, "localize the result on a smearing")->check(CLI::IsMember({"f", "h"}));
  app.add_option("--out", opt.out, "write output to a file");
  app.add_flag("--riemann-variation", opt.riemann_variation, "vary curvature through the Riemann tensor");

  std::string expr, in, wrt = "metric", spec, a_name, b_name, beta, chart_file;
  bool antisym = false, mod_mod = false;

  auto input = [&](CLI::App* c) {
    c->add_option("expr", expr, "expression in the input grammar");
    c->add_option("--in", in, "expression file (grammar text or JSON)");
  };
  auto* canon = app.add_subcommand("canon", "canonicalize an expression");
  input(canon);
  auto* vary = app.add_subcommand("vary", "first variation with respect to the metric or the momentum");
  input(vary);
  vary->add_option("--wrt", wrt)->check(CLI::IsMember({"metric", "momentum"}));
  auto* fderiv = app.add_subcommand("fderiv", "functional derivative of a smeared density");
  input(fderiv);
  fderiv->add_option("--wrt", wrt)->check(CLI::IsMember({"metric", "momentum"}));
  auto* bracket = app.add_subcommand("bracket", "Poisson bracket of two constraints");
  bracket->add_option("--spec", spec, "constraint manifest (JSON)");
  bracket->add_option("--a", a_name, "first constraint label")->required();
  bracket->add_option("--b", b_name, "second constraint label")->required();
  bracket->add_flag("--antisym", antisym, "subtract the f <-> h swap");
  auto* classify_cmd = app.add_subcommand("classify", "grade terms by momentum power and derivatives");
  input(classify_cmd);
  auto* reduce = app.add_subcommand("reduce", "reduce modulo the momentum constraint");
  input(reduce);
  auto* closure = app.add_subcommand("closure", "closure report for a constraint set");
  closure->add_option("--spec", spec, "constraint manifest (JSON)")->required();
  closure->add_flag("--include-mod-mod", mod_mod, "also bracket modifications with each other");
  auto* linear = app.add_subcommand("check-linear", "conditions on a linear-in-momentum term");
  linear->add_option("beta", beta, "symmetric tensor with free indices _a _b")->required();
  auto* oracle_cmd = app.add_subcommand("oracle", "evaluate an expression on a numeric chart");
  input(oracle_cmd);
  oracle_cmd->add_option("--chart", chart_file, "chart configuration (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    Runner run(opt, load_profile(opt.profile));
    Context& ctx = run.ctx();

    if (*canon) {
      run.emit_expr("canon", normalize(load_expr(expr, in), ctx));
    } else if (*vary) {
      Expr e = load_expr(expr, in);
      run.emit_expr("vary", wrt == "metric" ? vary_metric(e, ctx) : vary_momentum(e, ctx));
    } else if (*fderiv) {
      Expr e = load_expr(expr, in);
      Wrt w = wrt == "metric" ? Wrt::metric : Wrt::momentum;
      Expr k = w == Wrt::metric ? functional_derivative(e, w, up("a"), up("b"), ctx)
                                : functional_derivative(e, w, dn("a"), dn("b"), ctx);
      run.emit_expr("fderiv", k);
    } else if (*bracket) {
      std::vector<ConstraintSpec> lib;
      if (!spec.empty()) {
        int d = 0;
        lib = load_specs(spec, &d);
        if (d && !opt.dim) ctx.dim = d;
      }
      ConstraintSpec A = builtin_or_manifest(a_name, lib), B = builtin_or_manifest(b_name, lib);
      check_spec(A, ctx);
      check_spec(B, ctx);
      int fa = is_vector(A) ? S::xi : S::f, fb = is_vector(B) ? S::eta : S::h;
      Expr r = antisym ? antisymmetrized_bracket(A, B, fa, fb, ctx)
                       : poisson_bracket(make_constraint(A, fa, ctx), make_constraint(B, fb, ctx), ctx);
      run.emit_expr("bracket", run.maybe_localize(r));
    } else if (*classify_cmd) {
      auto bs = classify(normalize(load_expr(expr, in), ctx));
      run.emit_json("classify", {{"buckets", buckets_json(bs)}}, buckets_text(bs));
    } else if (*reduce) {
      auto r = reduce_weakly(normalize(load_expr(expr, in), ctx), ctx);
      std::ostringstream o;
      for (const auto& l : r.log) o << "# dropped: " << l << "\n";
      if (run.fmt() == Format::json) {
        run.emit_expr("reduce", r.e, {{"log", r.log}, {"passes", r.passes}});
      } else {
        run.emit_json("reduce", {}, o.str() + render(r.e, run.fmt()) + "\n");
      }
    } else if (*closure) {
      int d = 0;
      auto specs = load_specs(spec, &d);
      if (d && !opt.dim) ctx.dim = d;
      for (const auto& s : specs) check_spec(s, ctx);
      ClosureOptions co;
      co.include_mod_mod = mod_mod;
      auto r = closure_report(specs, co, ctx);
      std::string body = run.fmt() == Format::latex ? report_to_latex(r) : report_to_text(r);
      run.emit_json("closure", {{"report", report_to_json(r)}}, body);
    } else if (*linear) {
      auto r = check_linear_term_conditions(parse(beta), ctx);
      std::ostringstream o;
      o << "divergence condition: " << (r.divfree ? "holds" : "fails") << "\n";
      o << "  residue: " << render(r.divergence, run.fmt() == Format::latex ? Format::latex : Format::text) << "\n";
      o << "curl condition: " << (r.curlfree ? "holds" : "fails") << "\n";
      o << "  residue: " << render(r.curl, run.fmt() == Format::latex ? Format::latex : Format::text) << "\n";
      o << r.note << "\n";
      run.emit_json("check-linear",
                    {{"divfree", r.divfree},
                     {"curlfree", r.curlfree},
                     {"divergence", to_json(r.divergence)},
                     {"curl", to_json(r.curl)},
                     {"note", r.note}},
                    o.str());
    } else if (*oracle_cmd) {
      oracle::ChartConfig cfg;
      if (!chart_file.empty()) cfg = oracle::chart_config_from_json(json::parse(read_file(chart_file)));
      cfg.seed = opt.seed != 1 || chart_file.empty() ? opt.seed : cfg.seed;
      if (opt.dim) cfg.dim = opt.dim;
      oracle::Chart ch(cfg);
      Expr e = normalize(load_expr(expr, in), ctx);
      auto t = oracle::evaluate(e, ch);
      json idx = json::array();
      for (auto i : t.idx) idx.push_back(std::string(i.up ? "^" : "_") + label_name(i.id));
      std::ostringstream o;
      o << "point";
      for (double x : ch.point()) o << " " << x;
      o << "\naxes";
      for (const auto& s : idx) o << " " << s.get<std::string>();
      o << "\nvalues";
      o.precision(15);
      for (double v : t.data) o << " " << v;
      o << "\n";
      run.emit_json("oracle",
                    {{"chart", oracle::chart_config_to_json(cfg)}, {"point", ch.point()}, {"axes", idx}, {"values", t.data}},
                    o.str());
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const SpecError& e) {
    std::cerr << "invalid constraint: " << e.what() << "\n";
    return 2;
  } catch (const StructureError& e) {
    std::cerr << "malformed expression: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "bad JSON input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "computation failed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
