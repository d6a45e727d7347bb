#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cg/rational.hpp"
#include "cg/symbols.hpp"

namespace cg {

// Labels: non-negative ids are interned names (or fresh internal labels),
// negative ids are canonical dummies produced by canonicalize.
int label(const std::string& name);
const std::string& label_name(int id);
int fresh_label();
inline bool is_canonical_dummy(int id) { return id < 0; }

struct Index {
  int id = 0;
  bool up = false;
  bool operator==(const Index&) const = default;
  auto operator<=>(const Index&) const = default;
};

inline Index up(const std::string& n) { return {label(n), true}; }
inline Index dn(const std::string& n) { return {label(n), false}; }
inline Index flip(Index i) { return {i.id, !i.up}; }

struct Factor {
  int sym = 0;
  std::vector<Index> d;  // derivative prefix, outermost first
  std::vector<Index> s;  // slots
  bool operator==(const Factor&) const = default;
  auto operator<=>(const Factor&) const = default;
};

struct Term {
  Rational c{1};
  std::vector<Factor> f;
  int dimpow = 0;  // power of the symbolic dimension
  int wpow = 0;    // power of sqrt(det g)
};

class Expr {
 public:
  Expr() = default;
  explicit Expr(Term t);
  static Expr scalar(Rational c);

  std::vector<Term> terms;

  bool is_zero() const { return terms.empty(); }
  std::size_t size() const { return terms.size(); }

  Expr& operator+=(const Expr& o);
  Expr& operator-=(const Expr& o);
  Expr& operator*=(const Rational& r);
};

Expr operator+(Expr a, const Expr& b);
Expr operator-(Expr a, const Expr& b);
Expr operator-(Expr a);
Expr operator*(Rational r, Expr e);
Expr operator*(const Expr& a, const Expr& b);  // distributes, renaming clashing dummies

// builders
Factor fac(int sym, std::vector<Index> slots, std::vector<Index> derivs = {});
Expr ex(Rational c, std::vector<Factor> fs, int wpow = 0, int dimpow = 0);
Expr ex(std::vector<Factor> fs, int wpow = 0);
Expr metric(Index a, Index b);

// structural helpers
Term mul_terms(const Term& a, const Term& b);
struct Occ { int factor; bool deriv; int pos; };
std::vector<Occ> occurrences(const Term& t, int label_id);
std::vector<Index> free_indices(const Term& t);  // sorted by (name, variance)
std::vector<int> dummy_labels(const Term& t);
std::vector<Index> free_signature(const Expr& e);  // throws on inconsistent signatures
void validate(const Term& t);                    // throws StructureError
void rename_label(Term& t, int from, int to);
void rename_dummies_fresh(Term& t);
bool term_less_structure(const Term& a, const Term& b);
bool same_structure(const Term& a, const Term& b);
Expr collect(std::vector<Term> ts);  // merges structurally identical terms, sorts, drops zeros
bool identical(const Expr& a, const Expr& b);

int momentum_power(const Term& t);
int derivative_degree(const Term& t);
int count_symbol(const Term& t, int sym_id);
int smearing_derivs(const Term& t);
bool contains_symbol(const Expr& e, int sym_id);

struct StructureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cg
