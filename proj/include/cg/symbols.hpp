#pragma once

#include <deque>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cg {

// slot k of the permuted factor is slot p[k] of the original; T_perm = sign * T
struct SlotPerm {
  std::vector<int> p;
  int sign = 1;
  bool operator==(const SlotPerm&) const = default;
};

enum class VarClass { metric, momentum, metric_built, smearing, formal, constant, field };

struct Symbol {
  int id = -1;
  std::string name;
  std::string latex;
  int nslots = 0;
  std::vector<bool> up;            // natural variance per slot
  std::vector<SlotPerm> group;     // all group elements, identity first
  int deriv_degree = 0;            // intrinsic derivative count (2 for curvature)
  int momentum_grade = 0;          // 1 for pi
  VarClass vclass = VarClass::field;
  bool cov_const = false;          // killed by any covariant derivative
  int order = 0;                   // factor sort key
};

class Registry {
 public:
  static Registry& instance();

  // Registers a symbol and closes its symmetry group. Throws if the name is
  // taken or the generators force the tensor to vanish.
  int add(Symbol s, const std::vector<SlotPerm>& generators);
  int find(std::string_view name) const;
  const Symbol& at(int id) const { return syms_[id]; }
  int size() const { return static_cast<int>(syms_.size()); }

 private:
  Registry();
  std::deque<Symbol> syms_;
  std::unordered_map<std::string, int> by_name_;
  mutable std::mutex mu_;
};

inline const Symbol& sym(int id) { return Registry::instance().at(id); }

// Fixed ids of the built-in symbols. g doubles as the inverse metric and the
// Kronecker delta depending on the variance of its slots.
namespace S {
inline constexpr int g = 0, pi = 1, dpi = 2, dg = 3, R = 4, Ricci = 5, Riem = 6, G = 7, Ginv = 8,
                     Lambda = 9, c = 10, alpha = 11, f = 12, h = 13, N = 14, M = 15, xi = 16,
                     eta = 17, u = 18, v = 19, V = 20, A = 21, Sym = 22, T = 23, phi = 24, beta = 25,
                     W = 26;
}

std::vector<SlotPerm> close_group(int nslots, const std::vector<SlotPerm>& gens);

}  // namespace cg
