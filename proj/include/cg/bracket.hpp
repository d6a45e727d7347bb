#pragma once

#include <optional>
#include <string>

#include "json.hpp"
#include "cg/variation.hpp"

namespace cg {

enum class ConstraintKind { gr_hamiltonian, momentum_constraint, kinetic_mod, potential_mod, linear_mod, custom };

const char* kind_name(ConstraintKind k);
ConstraintKind kind_from_name(const std::string& s);

// Labels used by kinetic_mod: B carries free indices ^i1..^in, ^j1..^jm, _a _b _c _d
// and the density is B (nabla_i1..nabla_in pi^cd)(nabla_j1..nabla_jm pi^ab).
struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::custom;
  std::string label;
  Expr B;
  int n = 0, m = 0;
  Expr V;        // potential_mod: scalar density
  Expr beta;     // linear_mod: symmetric down pair _a _b
  Expr density;  // custom: scalar density without smearing
};

struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SmearedFunctional {
  Expr density;  // includes the smearing factor
  int smearing = S::f;
  std::string label;
};

ConstraintSpec gr_hamiltonian();
ConstraintSpec momentum_constraint();
ConstraintSpec kinetic_mod(Expr B, int n, int m, const std::string& label = "kinetic_mod");
ConstraintSpec potential_mod(Expr V, const std::string& label = "potential_mod");
ConstraintSpec linear_mod(Expr beta, const std::string& label = "linear_mod");
ConstraintSpec custom(Expr density, const std::string& label = "custom");
// ultralocal kinetic term G pi pi / sqrt g, and the GR potential -sqrt g (R - 2 Lambda)
ConstraintSpec kinetic_gr();
ConstraintSpec potential_gr();

bool is_vector(const ConstraintSpec& s);
// Throws SpecError naming the offending pair when a forbidden contraction or a
// broken exchange symmetry is found.
void check_spec(const ConstraintSpec& s, const Context& ctx);

// Unsmeared density of the constraint (scalar, or one free _a index for vector constraints).
Expr spec_density(const ConstraintSpec& s, const Context& ctx);
SmearedFunctional make_constraint(const ConstraintSpec& s, int smearing, const Context& ctx);
// Same with the smearing replaced by an arbitrary expression (scalar or ^a).
SmearedFunctional make_constraint_with(const ConstraintSpec& s, const Expr& smearing_expr, const Context& ctx);

// Integrand of {A, B}; equal up to total derivatives.
Expr poisson_bracket(const SmearedFunctional& A, const SmearedFunctional& B, const Context& ctx);
Expr antisymmetrized_bracket(const ConstraintSpec& A, const ConstraintSpec& B, int f, int h, const Context& ctx);

// Moves all derivatives off `which` and drops it. For a vector smearing the
// freed index is renamed to `free_label`.
Expr localize(const Expr& e, int which, const Context& ctx, const std::string& free_label = "a");
// Local form: integrate by parts off `which`, then localize.
Expr local_form(const Expr& e, int which, const Context& ctx, const std::string& free_label = "a");

nlohmann::json spec_to_json(const ConstraintSpec& s);
ConstraintSpec spec_from_json(const nlohmann::json& j);
nlohmann::json manifest_to_json(const std::vector<ConstraintSpec>& specs);
std::vector<ConstraintSpec> manifest_from_json(const nlohmann::json& j);

}  // namespace cg
