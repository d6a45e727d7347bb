#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "cg/bracket.hpp"

namespace cg::oracle {

// Truncated multivariate Taylor series around a point: f(x0 + y) = sum c_k y^k.
// Coefficients above `ord` are not trustworthy.
class JetTable;

class Jet {
 public:
  Jet() = default;
  Jet(std::shared_ptr<const JetTable> t, double c0 = 0.0);

  double value() const { return c.empty() ? 0.0 : c[0]; }
  int order() const { return ord; }
  const JetTable& table() const { return *tab; }

  Jet d(int i) const;  // partial derivative, order drops by one
  Jet& operator+=(const Jet& o);
  Jet& operator-=(const Jet& o);
  Jet& operator*=(double s);
  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator*(const Jet& a, const Jet& b);

  // g(a) for a univariate g given its derivatives at value(): dg[n] = g^(n)(value()).
  Jet compose(const std::vector<double>& dg) const;
  Jet reciprocal() const;
  Jet sqrt() const;

  std::shared_ptr<const JetTable> tab;
  std::vector<double> c;
  int ord = 0;
};

class JetTable {
 public:
  JetTable(int dim, int order);
  int dim, order;
  std::vector<std::vector<int>> mono;         // exponent vectors, graded
  std::vector<int> degree;
  std::vector<std::array<int, 3>> mul;         // (i, j, k) with mono[i] + mono[j] = mono[k], by degree
  std::vector<int> mul_end;                    // mul_end[D]: entries with total degree <= D
  std::vector<std::vector<std::pair<int, int>>> dtab;  // per direction: (from, to) with coefficient exponent
  int find(const std::vector<int>& e) const;
  std::shared_ptr<const JetTable> self;

 private:
  std::map<std::vector<int>, int> index_;
};

std::shared_ptr<const JetTable> jet_table(int dim, int order);

// Numeric tensor with labelled axes (one label per axis, distinct).
struct NumTensor {
  std::vector<Index> idx;
  std::vector<double> data;
  int dim = 3;
  double scalar() const;
  double max_abs() const;
};
double rel_diff(const NumTensor& a, const NumTensor& b);

struct ChartConfig {
  int dim = 3;
  unsigned seed = 1;
  double amplitude = 0.15;
  int stencil_order = 4;
  int modes = 3;            // Fourier modes per component
  bool transverse = false;  // momentum jets projected onto nabla_b pi^ab = 0 at the point
  double tol = 1e-6;
};
ChartConfig chart_config_from_json(const nlohmann::json& j);
nlohmann::json chart_config_to_json(const ChartConfig& c);

struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StepDegeneracy : OracleError {
  using OracleError::OracleError;
};

// Periodic box [0, 2 pi)^d with trigonometric component fields: a seeded
// perturbation of the flat metric, a symmetric momentum tensor, and one field
// per remaining symbol. Constants get seeded values.
class Chart {
 public:
  explicit Chart(const ChartConfig& cfg);

  const ChartConfig& config() const { return cfg_; }
  int dim() const { return cfg_.dim; }
  const std::vector<double>& point() const { return x0_; }
  void set_point(std::vector<double> x);

  // Additive metric perturbation eps * bump(x) * e_ab (e symmetric, natural down).
  void perturb_metric(double eps, std::function<Jet(const std::vector<double>&, int)> bump, std::vector<double> e);
  // Additive momentum perturbation eps * bump(x) * e^ab.
  void perturb_momentum(double eps, std::function<Jet(const std::vector<double>&, int)> bump, std::vector<double> e);
  void clear_perturbations();

  // Component jets of a symbol in natural variance at x, expanded to `order`.
  std::vector<Jet> raw_field(int sym_id, const std::vector<double>& x, int order) const;
  double constant(int sym_id) const;

  // Positive-definiteness at `samples` random points.
  bool metric_positive(int samples, unsigned seed) const;

 private:
  struct Mode {
    std::vector<int> k;
    double a, phase;
  };
  using Comp = std::vector<Mode>;
  Jet comp_jet(const Comp& c, const std::vector<double>& x, int order) const;
  std::vector<Comp> make_field(std::mt19937& rng, int nslots, const std::vector<SlotPerm>& group, double amp) const;

  ChartConfig cfg_;
  std::vector<double> x0_;
  std::map<int, std::vector<Comp>> fields_;
  std::map<int, double> consts_;
  double meps_ = 0, peps_ = 0;
  std::function<Jet(const std::vector<double>&, int)> mbump_, pbump_;
  std::vector<double> me_, pe_;

  friend class PointCache;
};

// Geometry and covariant derivatives at one point, built from jets.
class PointCache {
 public:
  PointCache(const Chart& chart, std::vector<double> x, int order);

  int dim() const { return d_; }
  const std::vector<double>& x() const { return x_; }
  double sqrtg() const { return sqrtg_.value(); }
  double g(int a, int b) const { return g_[a * d_ + b].value(); }
  double ginv(int a, int b) const { return gi_[a * d_ + b].value(); }
  double christoffel(int a, int b, int c) const { return gam_[(a * d_ + b) * d_ + c].value(); }

  // Natural-variance tensor of symbol `s` with `nd` covariant derivatives
  // (derivative axes first, outermost first, all down). Densities are returned
  // with their sqrt g factor.
  const std::vector<double>& field(int s, int nd);

  NumTensor evaluate(const Expr& e);
  NumTensor evaluate_term(const Term& t);

 private:
  const std::vector<Jet>& jets(int s, int nd);  // tensor part (no density factor)
  std::vector<Jet> covariant_d(const std::vector<Jet>& t, const std::vector<bool>& up) const;
  void transverse_projection();

  const Chart& chart_;
  std::vector<double> x_;
  int d_, order_;
  std::vector<Jet> g_, gi_, gam_;
  Jet sqrtg_;
  std::map<std::pair<int, int>, std::vector<Jet>> jets_;
  std::map<std::pair<int, int>, std::vector<double>> vals_;
};

// Jet order needed to evaluate e exactly at a point.
int required_order(const Expr& e);
NumTensor evaluate(const Expr& e, const Chart& chart);

// Central finite-difference covariant derivative of a numeric field given as
// a callback (evaluated at displaced points), with connection terms for the
// field's index variance and density weight.
using FieldFn = std::function<NumTensor(const std::vector<double>&)>;
NumTensor fd_nabla(const FieldFn& F, const Chart& chart, Index i, int weight, double h);
// Nested finite differences: d(prefix) applied to e (outermost first).
NumTensor fd_nabla_chain(const Expr& e, const std::vector<Index>& prefix, const Chart& chart, int weight, double h);

// Riemann from the Christoffel formula at the chart point (natural variance ^___).
std::vector<double> riemann_formula(const Chart& chart);

// Integral of a scalar density over the periodic box (trapezoid rule, n^d points).
double integrate(const Expr& density, const Chart& chart, int n);

struct FdResult {
  double fd = 0;      // Richardson-extrapolated central difference of F
  double kernel = 0;  // int K . bump with the symbolic kernel
  double rel = 0;
};
// Localized trigonometric bump around `center`: prod ((1 + cos(x_i - c_i)) / 2)^p.
std::function<Jet(const std::vector<double>&, int)> trig_bump(std::vector<double> center, int p);
FdResult fd_functional_derivative(const SmearedFunctional& F, Chart chart, Wrt wrt,
                                  std::function<Jet(const std::vector<double>&, int)> bump, std::vector<double> e,
                                  const Context& ctx, int grid = 16, double eps = 1e-3);

}  // namespace cg::oracle
