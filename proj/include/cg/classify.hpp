#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "cg/bracket.hpp"

namespace cg {

struct GradeKey {
  int pi_power = 0;
  int deriv_degree = 0;
  int smearing_derivs = 0;
  auto operator<=>(const GradeKey&) const = default;
};

struct GradeBucket {
  GradeKey key;
  Expr terms;
};

GradeKey grade_of(const Term& t);
// Exact partition, buckets in ascending key order.
std::vector<GradeBucket> classify(const Expr& e);

// Finer placement key: per momentum factor (derivative count, self-traced),
// sorted descending. Used to pick out a single monomial family.
struct Shape {
  GradeKey key;
  std::vector<std::pair<int, bool>> pis;
  auto operator<=>(const Shape&) const = default;
};

// With traces = false the self-traced flags are all cleared.
Shape shape_of(const Term& t, bool traces = true);
std::string shape_name(const Shape& s);
Expr project(const Expr& e, const Shape& s, bool traces = true);
Expr project_if(const Expr& e, const std::function<bool(const Term&)>& keep);
// Leading family: most derivatives on momenta, then most differentiated
// momenta, then most derivatives on smearings, then highest degree.
bool shape_leads(const Shape& a, const Shape& b);

struct WeakReduction {
  Expr e;
  std::vector<std::string> log;  // one entry per dropped momentum-constraint site
  int passes = 0;
};
// Drops every term containing a divergence of the momentum after commuting
// the contracted derivative innermost (commutator terms kept).
WeakReduction reduce_weakly(const Expr& e, const Context& ctx);

// A candidate contribution kernel x constraint, already in the same local
// form as the expression it is matched against.
struct Candidate {
  std::string constraint;
  Expr kernel;
  Expr contribution;
};

struct StructureFunction {
  std::string constraint;
  Expr kernel;  // coefficient folded in
};

struct MatchResult {
  bool success = false;
  std::vector<StructureFunction> kernels;
  Expr remainder;
};

// Solves e = sum x_i contribution_i exactly. On failure the grade groups that
// can be matched jointly are still matched and the rest is the remainder.
MatchResult match_constraint_combination(const Expr& e, const std::vector<Candidate>& cands, const Context& ctx);

enum class PairKind { scalar_scalar, scalar_vector, vector_vector };
// Candidate library for a pair of smeared constraints; scalar-scalar is
// localized on h, scalar-vector on f, vector-vector on eta.
std::vector<Candidate> candidate_library(const std::vector<ConstraintSpec>& specs, PairKind kind, const Context& ctx);

enum class Verdict { first_class, second_class, inconclusive };
const char* verdict_name(Verdict v);

struct ClosureOptions {
  bool include_mod_mod = false;  // brackets between two non-GR pieces
  // certificate family; default is the leading shape (traces ignored)
  std::function<bool(const Term&)> focus;
  std::string focus_name;
};

struct BlockReport {
  std::string name;
  Expr local;  // local form of the bracket
  MatchResult match;
  WeakReduction reduced;
  std::vector<GradeBucket> residue;
};

struct ObstructionReport {
  Verdict verdict = Verdict::inconclusive;
  std::vector<BlockReport> blocks;
  std::vector<StructureFunction> structure_functions;
  Expr certificate;
  std::string certificate_block;
  std::string certificate_family;
  std::string note;
};

ObstructionReport closure_report(const std::vector<ConstraintSpec>& specs, const ClosureOptions& opt, const Context& ctx);
nlohmann::json report_to_json(const ObstructionReport& r);
std::string report_to_latex(const ObstructionReport& r);
std::string report_to_text(const ObstructionReport& r);

struct LinearReport {
  Expr divergence;  // nabla_i2 (Ginv^{ab i1 i2} beta_ab), free ^i1
  bool divfree = false;
  Expr curl;  // antisymmetric part of the second variation, linear in v
  bool curlfree = false;
  std::string note;
};
LinearReport check_linear_term_conditions(const Expr& beta, const Context& ctx);

// Partial derivative with respect to an undifferentiated Ricci tensor R_kl
// (k, l up), with R read as g^pq R_pq. Derivatives of curvature are held fixed.
Expr ricci_partial(const Expr& e, Index k, Index l, const Context& ctx);

// lambda with a = lambda b after normalization, if any (b nonzero).
std::optional<Rational> proportional(const Expr& a, const Expr& b, const Context& ctx);

}  // namespace cg
