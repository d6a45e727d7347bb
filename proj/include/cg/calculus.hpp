#pragma once

#include <atomic>
#include <memory>
#include <stdexcept>
#include <string>

#include "cg/canon.hpp"

namespace cg {

struct ResourceExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct Cancelled : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Context {
  int dim = 3;
  bool riemann_variation = false;  // vary Ricci and R through the Riemann tensor
  std::size_t max_terms = 200000;
  int max_passes = 50;
  std::shared_ptr<std::atomic<bool>> cancel;

  void check(std::size_t nterms = 0) const;
};

// Product rule without normalization; covariantly constant factors are skipped.
Expr nabla(Index i, const Expr& e);
// Applies the prefix outermost-first as written, i.e. the last index acts first.
Expr nabla_chain(const std::vector<Index>& prefix, const Expr& e);
Expr leibniz_expand(Index i, const Expr& e, const Context& ctx);

// Exact [nabla_x, nabla_y] acting on the inner part of factor `fi` at prefix
// positions (pos, pos+1): t = t_swapped + returned correction.
Expr swap_correction(const Term& t, int fi, int pos);
// Reorders factor fi's prefix so that new[k] = old[perm[k]]. Returns the
// reordered term and the exact correction.
std::pair<Term, Expr> reorder_prefix(const Term& t, int fi, const std::vector<int>& perm);

enum class OrderPolicy { canonical, divergence_exposing };
Expr commute_to_order(const Term& t, OrderPolicy policy, const Context& ctx);

// Replaces G and Ginv by their metric realizations at ctx.dim:
// G_abcd = g_a(c g_d)b - g_ab g_cd / (d-1), Ginv^abcd = g^a(c g^d)b - g^ab g^cd.
Expr expand_dewitt(const Expr& e, const Context& ctx);

Expr apply_identities(const Expr& e, const Context& ctx);
// Full normal form: DeWitt expansion, metric contraction, curvature identities, exact derivative
// normal ordering with curvature corrections, first Bianchi elimination.
Expr normalize(const Expr& e, const Context& ctx);
bool equal_normal(const Expr& a, const Expr& b, const Context& ctx);

struct IbpResult {
  Expr e;
  bool density_warning = false;
};
// Moves every derivative off occurrences of `target` (boundary terms dropped).
IbpResult integrate_by_parts(const Expr& e, int target, const Context& ctx, bool canonical_output = true);
bool is_density(const Term& t);

// Replaces each occurrence target[pattern...] by `replacement`, whose free
// indices must be exactly the pattern indices.
Expr substitute(const Expr& e, int target, const std::vector<Index>& pattern, const Expr& replacement,
                const Context& ctx);

}  // namespace cg
