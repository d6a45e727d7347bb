#pragma once

#include "cg/calculus.hpp"

namespace cg {

enum class SpecialKind { Xi, A0, A1, A2, F0, DeWitt, DeWittInverse };

// Index bindings (variance as passed):
//   Xi (l,i,j,c,a,b)         A0 (k,l,i,j,l1,l2)       A1 (a1,k,l,i,j,lp)
//   A2 (a1,a2,k,l,i,j,lp)    F0 (h,l1,i,j,l2,e,f,g)   DeWitt/DeWittInverse (a,b,c,d)
// DeWitt needs a numeric dimension.
Expr build_special(SpecialKind kind, const std::vector<Index>& binding, int dim = 3);
int special_arity(SpecialKind kind);
const char* special_name(SpecialKind kind);


// delta Gamma^e_{ab} in terms of nabla dg, with e up and a, b down.
Expr delta_christoffel(Index e, Index a, Index b);

struct UnsupportedSymbol : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// First-order variations; the result is linear in dg (resp. dpi).
Expr vary_metric(const Expr& e, const Context& ctx);
Expr vary_momentum(const Expr& e, const Context& ctx);

enum class Wrt { metric, momentum };
// Kernel K with dF = int K^{ab} dg_ab (free indices ^a ^b), or
// dF = int K_{ab} dpi^ab (free indices _a _b), for a density that already
// contains its smearing. The kernel is symmetric and normalized.
Expr functional_derivative(const Expr& density, Wrt wrt, Index a, Index b, const Context& ctx);

}  // namespace cg
