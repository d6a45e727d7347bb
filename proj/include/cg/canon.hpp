#pragma once

#include <optional>

#include "cg/expr.hpp"

namespace cg {

struct CanonOptions {
  bool metric_normal = true;  // dummy variance is immaterial (indices raised/lowered freely)
  bool commute = false;       // derivative prefixes may be permuted; permutations are reported
  int dim = 0;                // > 0 folds the dimension power into the coefficient
};

struct CanonLeaf {
  int sign = 1;
  std::vector<int> order;               // output position -> input factor
  std::vector<std::vector<int>> dperm;  // per output position: new prefix[k] = old prefix[dperm[k]]
};

struct CanonResult {
  Term term;  // canonical representative (coefficient includes the leaf sign)
  bool zero = false;
  CanonLeaf leaf;
  bool antisym = false;  // commute mode: an optimal leaf of opposite sign exists
  CanonLeaf leaf2;
};

CanonResult canon_search(const Term& t, const CanonOptions& opt);
std::optional<Term> canonicalize_term(const Term& t, const CanonOptions& opt = {});
Expr canonicalize(const Expr& e, const CanonOptions& opt = {});

// Contract metrics and deltas into neighbouring factors, replace traces by the
// dimension and canonicalize in metric-normal mode.
std::optional<Term> contract_metrics(Term t);
Expr simplify_metric(const Expr& e, int dim = 3);

bool equal(const Expr& a, const Expr& b, int dim = 3);

// Applies an explicit slot permutation to a factor and canonicalizes; used by
// symmetry property tests.
Term permute_factor_slots(const Term& t, int factor, const SlotPerm& p);

}  // namespace cg
