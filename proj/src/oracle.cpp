#include "cg/oracle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <set>

namespace cg::oracle {

namespace {
constexpr double kPi = 3.14159265358979323846;

bool is_density_sym(int s) { return s == S::pi || s == S::dpi; }
bool is_curvature(int s) { return s == S::R || s == S::Ricci || s == S::Riem; }

int ipow(int b, int e) {
  int r = 1;
  while (e-- > 0) r *= b;
  return r;
}

double factorial(int n) {
  double r = 1;
  for (int k = 2; k <= n; ++k) r *= k;
  return r;
}
}  // namespace

// ---------------------------------------------------------------- jets

JetTable::JetTable(int d, int K) : dim(d), order(K) {
  for (int deg = 0; deg <= K; ++deg) {
    std::vector<int> e(d, 0);
    // all exponent vectors of total degree deg, lexicographically descending
    std::function<void(int, int)> rec = [&](int pos, int left) {
      if (pos == d - 1) {
        e[pos] = left;
        index_[e] = static_cast<int>(mono.size());
        mono.push_back(e);
        degree.push_back(deg);
        return;
      }
      for (int k = left; k >= 0; --k) {
        e[pos] = k;
        rec(pos + 1, left - k);
      }
    };
    rec(0, deg);
  }
  int n = static_cast<int>(mono.size());
  std::vector<std::array<int, 3>> all;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (degree[i] + degree[j] > K) continue;
      std::vector<int> s(d);
      for (int k = 0; k < d; ++k) s[k] = mono[i][k] + mono[j][k];
      all.push_back({i, j, index_.at(s)});
    }
  std::stable_sort(all.begin(), all.end(),
                   [&](const auto& a, const auto& b) { return degree[a[2]] < degree[b[2]]; });
  mul = all;
  mul_end.assign(K + 1, 0);
  for (int D = 0; D <= K; ++D)
    mul_end[D] = static_cast<int>(std::count_if(mul.begin(), mul.end(), [&](const auto& m) { return degree[m[2]] <= D; }));
  dtab.resize(d);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < d; ++i)
      if (mono[k][i] > 0) {
        std::vector<int> e2 = mono[k];
        --e2[i];
        dtab[i].push_back({k, index_.at(e2)});
      }
}

int JetTable::find(const std::vector<int>& e) const {
  auto it = index_.find(e);
  return it == index_.end() ? -1 : it->second;
}

std::shared_ptr<const JetTable> jet_table(int dim, int order) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<JetTable>> cache;
  std::lock_guard<std::mutex> lk(mu);
  auto& p = cache[{dim, order}];
  if (!p) {
    p = std::make_shared<JetTable>(dim, order);
    p->self = p;
  }
  return p;
}

Jet::Jet(std::shared_ptr<const JetTable> t, double c0) : tab(std::move(t)) {
  c.assign(tab->mono.size(), 0.0);
  c[0] = c0;
  ord = tab->order;
}

Jet Jet::d(int i) const {
  Jet r(tab);
  for (auto [from, to] : tab->dtab[i]) r.c[to] += tab->mono[from][i] * c[from];
  r.ord = ord - 1;
  return r;
}

Jet& Jet::operator+=(const Jet& o) {
  if (c.empty()) return *this = o;
  for (std::size_t k = 0; k < c.size(); ++k) c[k] += o.c[k];
  ord = std::min(ord, o.ord);
  return *this;
}

Jet& Jet::operator-=(const Jet& o) {
  if (c.empty()) return *this = -1.0 * o;
  for (std::size_t k = 0; k < c.size(); ++k) c[k] -= o.c[k];
  ord = std::min(ord, o.ord);
  return *this;
}

Jet& Jet::operator*=(double s) {
  for (auto& x : c) x *= s;
  return *this;
}

Jet operator*(const Jet& a, const Jet& b) {
  Jet r(a.tab);
  r.ord = std::min(a.ord, b.ord);
  if (r.ord < 0) return r;
  const auto& T = *a.tab;
  int end = T.mul_end[r.ord];
  for (int k = 0; k < end; ++k) {
    const auto& m = T.mul[k];
    r.c[m[2]] += a.c[m[0]] * b.c[m[1]];
  }
  return r;
}

Jet Jet::compose(const std::vector<double>& dg) const {
  Jet t = *this;
  t.c[0] = 0;
  Jet r(tab, dg[0]);
  r.ord = ord;
  Jet p(tab, 1.0);
  for (int n = 1; n <= std::max(ord, 0) && n < static_cast<int>(dg.size()); ++n) {
    p = p * t;
    r += (dg[n] / factorial(n)) * p;
  }
  r.ord = ord;
  return r;
}

Jet Jet::reciprocal() const {
  double a = value();
  std::vector<double> dg(std::max(ord, 0) + 1);
  for (int n = 0; n <= std::max(ord, 0); ++n) dg[n] = ((n % 2) ? -1.0 : 1.0) * factorial(n) / std::pow(a, n + 1);
  return compose(dg);
}

Jet Jet::sqrt() const {
  double a = value();
  std::vector<double> dg(std::max(ord, 0) + 1);
  for (int n = 0; n <= std::max(ord, 0); ++n) {
    double k = 1;
    for (int j = 0; j < n; ++j) k *= 0.5 - j;
    dg[n] = k * std::pow(a, 0.5 - n);
  }
  return compose(dg);
}

// ---------------------------------------------------------------- tensors

double NumTensor::scalar() const {
  if (!idx.empty()) throw OracleError("tensor is not a scalar");
  return data.empty() ? 0.0 : data[0];
}

double NumTensor::max_abs() const {
  double m = 0;
  for (double x : data) m = std::max(m, std::fabs(x));
  return m;
}

double rel_diff(const NumTensor& a, const NumTensor& b) {
  if (a.data.size() != b.data.size()) throw OracleError("shape mismatch");
  double num = 0, den = 0;
  for (std::size_t k = 0; k < a.data.size(); ++k) {
    num = std::max(num, std::fabs(a.data[k] - b.data[k]));
    den = std::max({den, std::fabs(a.data[k]), std::fabs(b.data[k])});
  }
  return num / std::max(den, 1e-300);
}

namespace {

// Labelled dense tensor used while contracting a term.
struct LT {
  std::vector<int> lab;
  std::vector<bool> up;
  std::vector<double> v;
};

// Sums repeated labels of one factor.
LT take_traces(LT t, int d) {
  for (;;) {
    int a = -1, b = -1;
    for (std::size_t i = 0; i < t.lab.size() && a < 0; ++i)
      for (std::size_t j = i + 1; j < t.lab.size(); ++j)
        if (t.lab[i] == t.lab[j]) {
          a = static_cast<int>(i);
          b = static_cast<int>(j);
          break;
        }
    if (a < 0) return t;
    int r = static_cast<int>(t.lab.size());
    LT o;
    for (int k = 0; k < r; ++k)
      if (k != a && k != b) {
        o.lab.push_back(t.lab[k]);
        o.up.push_back(t.up[k]);
      }
    o.v.assign(ipow(d, r - 2), 0.0);
    std::vector<int> ix(r, 0);
    for (std::size_t flat = 0; flat < t.v.size(); ++flat) {
      std::size_t rem = flat;
      for (int k = r - 1; k >= 0; --k) {
        ix[k] = static_cast<int>(rem % d);
        rem /= d;
      }
      if (ix[a] != ix[b]) continue;
      std::size_t of = 0;
      for (int k = 0; k < r; ++k)
        if (k != a && k != b) of = of * d + ix[k];
      o.v[of] += t.v[flat];
    }
    t = std::move(o);
  }
}

LT contract(const LT& A, const LT& B, const std::set<int>& keep, int d) {
  std::vector<int> U = A.lab;
  std::vector<bool> Uup = A.up;
  for (std::size_t k = 0; k < B.lab.size(); ++k)
    if (std::find(U.begin(), U.end(), B.lab[k]) == U.end()) {
      U.push_back(B.lab[k]);
      Uup.push_back(B.up[k]);
    }
  int n = static_cast<int>(U.size());
  LT o;
  std::vector<int> opos;
  for (int k = 0; k < n; ++k)
    if (keep.count(U[k])) {
      o.lab.push_back(U[k]);
      o.up.push_back(Uup[k]);
      opos.push_back(k);
    }
  auto strides = [&](const std::vector<int>& lab) {
    std::vector<std::size_t> s(n, 0);
    std::size_t st = 1;
    for (int k = static_cast<int>(lab.size()) - 1; k >= 0; --k) {
      int u = static_cast<int>(std::find(U.begin(), U.end(), lab[k]) - U.begin());
      s[u] += st;
      st *= d;
    }
    return s;
  };
  auto sa = strides(A.lab), sb = strides(B.lab), so = strides(o.lab);
  o.v.assign(ipow(d, static_cast<int>(o.lab.size())), 0.0);
  std::vector<int> ix(n, 0);
  std::size_t total = ipow(d, n);
  std::size_t ia = 0, ib = 0, io = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    o.v[io] += A.v[ia] * B.v[ib];
    for (int k = n - 1; k >= 0; --k) {
      if (++ix[k] < d) {
        ia += sa[k];
        ib += sb[k];
        io += so[k];
        break;
      }
      ix[k] = 0;
      ia -= sa[k] * (d - 1);
      ib -= sb[k] * (d - 1);
      io -= so[k] * (d - 1);
    }
  }
  return o;
}

// Moves axis `ax` of a rank-r tensor through a d x d matrix M: out[..a..] = sum_b M[a][b] in[..b..].
std::vector<double> apply_matrix(const std::vector<double>& in, int r, int ax, int d, const std::vector<double>& M) {
  std::vector<double> out(in.size(), 0.0);
  std::size_t inner = ipow(d, r - ax - 1), outer = ipow(d, ax);
  for (std::size_t o = 0; o < outer; ++o)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) {
        double m = M[a * d + b];
        if (m == 0) continue;
        for (std::size_t i = 0; i < inner; ++i)
          out[(o * d + a) * inner + i] += m * in[(o * d + b) * inner + i];
      }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- chart

ChartConfig chart_config_from_json(const nlohmann::json& j) {
  ChartConfig c;
  c.dim = j.value("dimension", j.value("dim", c.dim));
  c.seed = j.value("seed", c.seed);
  c.amplitude = j.value("amplitude", c.amplitude);
  c.stencil_order = j.value("stencil_order", c.stencil_order);
  c.modes = j.value("modes", c.modes);
  c.transverse = j.value("transverse", c.transverse);
  c.tol = j.value("tolerance", c.tol);
  if (c.stencil_order != 2 && c.stencil_order != 4 && c.stencil_order != 6)
    throw OracleError("stencil order must be 2, 4 or 6");
  if (c.dim < 2) throw OracleError("dimension must be at least 2");
  return c;
}

nlohmann::json chart_config_to_json(const ChartConfig& c) {
  return {{"dimension", c.dim}, {"seed", c.seed},         {"amplitude", c.amplitude}, {"stencil_order", c.stencil_order},
          {"modes", c.modes},   {"transverse", c.transverse}, {"tolerance", c.tol}};
}

std::vector<Chart::Comp> Chart::make_field(std::mt19937& rng, int nslots, const std::vector<SlotPerm>& group,
                                           double amp) const {
  int d = cfg_.dim;
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::uniform_int_distribution<int> K(-2, 2);
  int ncomp = ipow(d, nslots);
  std::vector<Comp> raw(ncomp);
  for (auto& c : raw) {
    c.push_back({std::vector<int>(d, 0), amp * U(rng), 0.0});  // constant part
    for (int m = 0; m < cfg_.modes; ++m) {
      Mode md;
      md.k.resize(d);
      for (auto& k : md.k) k = K(rng);
      md.a = amp * U(rng);
      md.phase = kPi * U(rng);
      c.push_back(md);
    }
  }
  if (group.size() <= 1) return raw;
  // average over the slot symmetry group
  std::vector<Comp> out(ncomp);
  std::vector<int> ix(nslots), jx(nslots);
  double w = 1.0 / static_cast<double>(group.size());
  for (int flat = 0; flat < ncomp; ++flat) {
    int rem = flat;
    for (int k = nslots - 1; k >= 0; --k) {
      ix[k] = rem % d;
      rem /= d;
    }
    for (const auto& g : group) {
      for (int k = 0; k < nslots; ++k) jx[k] = ix[g.p[k]];
      int j = 0;
      for (int k = 0; k < nslots; ++k) j = j * d + jx[k];
      for (auto md : raw[j]) {
        md.a *= w * g.sign;
        out[flat].push_back(md);
      }
    }
  }
  return out;
}

Chart::Chart(const ChartConfig& cfg) : cfg_(cfg) {
  if (cfg_.dim < 2) throw OracleError("dimension must be at least 2");
  for (int attempt = 0;; ++attempt) {
    std::mt19937 rng(cfg_.seed * 7919u + 104729u * attempt + 17u);
    fields_.clear();
    consts_.clear();
    int d = cfg_.dim;
    // metric: flat plus symmetric perturbation
    auto gf = make_field(rng, 2, sym(S::g).group, cfg_.amplitude);
    for (int a = 0; a < d; ++a) gf[a * d + a].push_back({std::vector<int>(d, 0), 1.0, 0.0});
    fields_[S::g] = gf;
    for (int s = 0; s < Registry::instance().size(); ++s) {
      const Symbol& Y = sym(s);
      if (s == S::g) continue;
      if (Y.vclass == VarClass::constant) {
        consts_[s] = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
        continue;
      }
      if (Y.vclass == VarClass::metric_built) continue;
      fields_[s] = make_field(rng, Y.nslots, Y.group, 1.0);
    }
    std::uniform_real_distribution<double> X(0.0, 2 * kPi);
    x0_.resize(d);
    for (auto& x : x0_) x = X(rng);
    if (metric_positive(64, cfg_.seed + attempt)) break;
    if (attempt > 50) throw OracleError("could not sample a positive-definite metric");
  }
}

void Chart::set_point(std::vector<double> x) {
  if (static_cast<int>(x.size()) != cfg_.dim) throw OracleError("point has wrong dimension");
  x0_ = std::move(x);
}

void Chart::perturb_metric(double eps, std::function<Jet(const std::vector<double>&, int)> bump, std::vector<double> e) {
  meps_ = eps;
  mbump_ = std::move(bump);
  me_ = std::move(e);
}

void Chart::perturb_momentum(double eps, std::function<Jet(const std::vector<double>&, int)> bump,
                             std::vector<double> e) {
  peps_ = eps;
  pbump_ = std::move(bump);
  pe_ = std::move(e);
}

void Chart::clear_perturbations() {
  meps_ = peps_ = 0;
  mbump_ = pbump_ = nullptr;
}

double Chart::constant(int s) const {
  auto it = consts_.find(s);
  if (it == consts_.end()) throw OracleError("no value bound for constant " + sym(s).name);
  return it->second;
}

Jet Chart::comp_jet(const Comp& c, const std::vector<double>& x, int order) const {
  auto T = jet_table(cfg_.dim, order);
  Jet r(T);
  for (const auto& m : c) {
    double th = m.phase;
    bool zero_k = true;
    for (int i = 0; i < cfg_.dim; ++i) {
      th += m.k[i] * x[i];
      zero_k &= m.k[i] == 0;
    }
    if (zero_k || order == 0) {
      r.c[0] += m.a * std::cos(th);
      continue;
    }
    Jet t(T, th);
    for (int i = 0; i < cfg_.dim; ++i) {
      std::vector<int> e(cfg_.dim, 0);
      e[i] = 1;
      t.c[T->find(e)] = m.k[i];
    }
    std::vector<double> dg(order + 1);
    for (int n = 0; n <= order; ++n) dg[n] = m.a * std::cos(th + n * kPi / 2);
    r += t.compose(dg);
  }
  return r;
}

namespace {
Jet jet_det(std::vector<Jet> A, int d) {
  Jet det(A[0].tab, 1.0);
  for (int col = 0; col < d; ++col) {
    Jet inv = A[col * d + col].reciprocal();
    det = det * A[col * d + col];
    for (int r = col + 1; r < d; ++r) {
      Jet fct = A[r * d + col] * inv;
      for (int k = col; k < d; ++k) A[r * d + k] -= fct * A[col * d + k];
    }
  }
  return det;
}
}  // namespace

std::vector<Jet> Chart::raw_field(int s, const std::vector<double>& x, int order) const {
  auto it = fields_.find(s);
  if (it == fields_.end()) throw OracleError("unbound symbol " + sym(s).name);
  std::vector<Jet> out;
  out.reserve(it->second.size());
  for (const auto& c : it->second) out.push_back(comp_jet(c, x, order));
  if (meps_ != 0 && mbump_ && (s == S::g || s == S::pi)) {
    std::vector<Jet> g0;
    for (const auto& c : fields_.at(S::g)) g0.push_back(comp_jet(c, x, order));
    std::vector<Jet> g1 = g0;
    Jet b = mbump_(x, order);
    for (std::size_t k = 0; k < g1.size(); ++k) g1[k] += (meps_ * me_[k]) * b;
    if (s == S::g) return g1;
    // the momentum density is held fixed: its tensor part scales with sqrt(g0 / g)
    Jet r = (jet_det(g0, cfg_.dim) * jet_det(g1, cfg_.dim).reciprocal()).sqrt();
    for (auto& j : out) j = j * r;
  }
  return out;
}

bool Chart::metric_positive(int samples, unsigned seed) const {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> X(0.0, 2 * kPi);
  int d = cfg_.dim;
  for (int k = 0; k < samples; ++k) {
    std::vector<double> x(d);
    for (auto& v : x) v = X(rng);
    auto g = raw_field(S::g, x, 0);
    Eigen::MatrixXd M(d, d);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) M(a, b) = g[a * d + b].value();
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) return false;
    if (llt.matrixL().toDenseMatrix().diagonal().minCoeff() < 0.3) return false;
  }
  return true;
}

// ---------------------------------------------------------------- point cache

PointCache::PointCache(const Chart& chart, std::vector<double> x, int order)
    : chart_(chart), x_(std::move(x)), d_(chart.dim()), order_(std::max(order, 1)) {
  int d = d_;
  g_ = chart.raw_field(S::g, x_, order_);
  // inverse and determinant by Gauss-Jordan elimination over jets
  std::vector<Jet> A = g_;
  auto T = jet_table(d, order_);
  gi_.assign(d * d, Jet(T));
  for (int a = 0; a < d; ++a) gi_[a * d + a] = Jet(T, 1.0);
  Jet det(T, 1.0);
  for (int col = 0; col < d; ++col) {
    Jet piv = A[col * d + col];
    det = det * piv;
    Jet inv = piv.reciprocal();
    for (int k = 0; k < d; ++k) {
      A[col * d + k] = A[col * d + k] * inv;
      gi_[col * d + k] = gi_[col * d + k] * inv;
    }
    for (int r = 0; r < d; ++r) {
      if (r == col) continue;
      Jet fct = A[r * d + col];
      for (int k = 0; k < d; ++k) {
        A[r * d + k] -= fct * A[col * d + k];
        gi_[r * d + k] -= fct * gi_[col * d + k];
      }
    }
  }
  sqrtg_ = det.sqrt();
  gam_.assign(d * d * d, Jet(T));
  std::vector<Jet> dg(d * d * d);  // dg[(c*d + a)*d + b] = d_c g_ab
  for (int c = 0; c < d; ++c)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) dg[(c * d + a) * d + b] = g_[a * d + b].d(c);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      for (int c = 0; c < d; ++c) {
        Jet s(T);
        s.ord = order_ - 1;
        for (int e = 0; e < d; ++e)
          s += gi_[a * d + e] * (dg[(b * d + e) * d + c] + dg[(c * d + e) * d + b] - dg[(e * d + b) * d + c]);
        gam_[(a * d + b) * d + c] = 0.5 * s;
      }
  if (chart.config().transverse) transverse_projection();
}

std::vector<Jet> PointCache::covariant_d(const std::vector<Jet>& t, const std::vector<bool>& up) const {
  int d = d_, r = static_cast<int>(up.size());
  std::size_t n = t.size();
  std::vector<Jet> out(d * n);
  std::vector<int> ix(r);
  for (int i = 0; i < d; ++i)
    for (std::size_t flat = 0; flat < n; ++flat) {
      Jet v = t[flat].d(i);
      std::size_t rem = flat;
      for (int k = r - 1; k >= 0; --k) {
        ix[k] = static_cast<int>(rem % d);
        rem /= d;
      }
      std::size_t stride = 1;
      for (int k = r - 1; k >= 0; --k) {
        for (int e = 0; e < d; ++e) {
          std::size_t other = flat + (static_cast<std::ptrdiff_t>(e) - ix[k]) * static_cast<std::ptrdiff_t>(stride);
          if (up[k])
            v += gam_[(ix[k] * d + i) * d + e] * t[other];
          else
            v -= gam_[(e * d + i) * d + ix[k]] * t[other];
        }
        stride *= d;
      }
      out[i * n + flat] = std::move(v);
    }
  return out;
}

void PointCache::transverse_projection() {
  // p^ab jets (tensor part of pi) corrected degree by degree: the degree-k
  // coefficients get the minimal-norm change that cancels the degree k-1 part of
  // nabla_b p^ab. Lower degrees are never touched, so the result does not depend
  // on the expansion order.
  int d = d_;
  auto p = chart_.raw_field(S::pi, x_, order_);
  const auto& T = *p[0].tab;
  int nm = static_cast<int>(T.mono.size());
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) pairs.push_back({a, b});
  auto divergence = [&](const std::vector<Jet>& q) {
    std::vector<bool> upv{true, true};
    auto dq = covariant_d(q, upv);
    std::vector<Jet> D(d, Jet(p[0].tab));
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) D[a] += dq[(b * d + a) * d + b];
    return D;
  };
  for (int k = 1; k <= order_; ++k) {
    std::vector<int> cols, rows;
    for (int m = 0; m < nm; ++m) {
      if (T.degree[m] == k) cols.push_back(m);
      if (T.degree[m] == k - 1) rows.push_back(m);
    }
    int nc = static_cast<int>(pairs.size() * cols.size()), nr = static_cast<int>(d * rows.size());
    auto unit = [&](int col) {
      std::vector<Jet> q(d * d, Jet(p[0].tab));
      auto [a, b] = pairs[col / cols.size()];
      int m = cols[col % cols.size()];
      q[a * d + b].c[m] = 1;
      q[b * d + a].c[m] = 1;
      return q;
    };
    auto project_rows = [&](const std::vector<Jet>& D, Eigen::Ref<Eigen::VectorXd> out) {
      int r = 0;
      for (int a = 0; a < d; ++a)
        for (int m : rows) out[r++] = D[a].c[m];
    };
    Eigen::MatrixXd A(nr, nc);
    for (int col = 0; col < nc; ++col) project_rows(divergence(unit(col)), A.col(col));
    Eigen::VectorXd res(nr);
    project_rows(divergence(p), res);
    Eigen::VectorXd delta = A.transpose() * (A * A.transpose()).ldlt().solve(-res);
    for (int col = 0; col < nc; ++col) {
      auto [a, b] = pairs[col / cols.size()];
      int m = cols[col % cols.size()];
      p[a * d + b].c[m] += delta[col];
      if (a != b) p[b * d + a].c[m] += delta[col];
    }
    Eigen::VectorXd after(nr);
    project_rows(divergence(p), after);
    if (after.norm() > 1e-9 * std::max(1.0, res.norm())) throw OracleError("transverse projection failed");
  }
  jets_[{S::pi, 0}] = std::move(p);
}

const std::vector<Jet>& PointCache::jets(int s, int nd) {
  auto key = std::make_pair(s, nd);
  auto it = jets_.find(key);
  if (it != jets_.end()) return it->second;
  int d = d_;
  const Symbol& Y = sym(s);
  auto T = jet_table(d, order_);
  std::vector<Jet> out;
  if (nd > 0) {
    if (Y.cov_const) {
      out.assign(ipow(d, nd + Y.nslots), Jet(T));
    } else {
      std::vector<bool> upv(nd - 1, false);
      upv.insert(upv.end(), Y.up.begin(), Y.up.end());
      out = covariant_d(jets(s, nd - 1), upv);
    }
  } else if (s == S::g) {
    out = g_;
  } else if (s == S::G || s == S::Ginv) {
    const auto& m = s == S::G ? g_ : gi_;
    double k = s == S::G ? 1.0 / (d - 1) : 1.0;
    out.assign(ipow(d, 4), Jet(T));
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        for (int c = 0; c < d; ++c)
          for (int e = 0; e < d; ++e)
            out[((a * d + b) * d + c) * d + e] =
                0.5 * (m[a * d + c] * m[b * d + e] + m[a * d + e] * m[b * d + c]) - k * (m[a * d + b] * m[c * d + e]);
  } else if (s == S::Riem) {
    out.assign(ipow(d, 4), Jet(T));
    auto G = [&](int a, int b, int c) -> const Jet& { return gam_[(a * d + b) * d + c]; };
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        for (int c = 0; c < d; ++c)
          for (int e = 0; e < d; ++e) {
            Jet v = G(a, e, b).d(c) - G(a, c, b).d(e);
            for (int f = 0; f < d; ++f) v += G(a, c, f) * G(f, e, b) - G(a, e, f) * G(f, c, b);
            out[((a * d + b) * d + c) * d + e] = v;
          }
  } else if (s == S::Ricci) {
    const auto& Rm = jets(S::Riem, 0);
    out.assign(d * d, Jet(T));
    for (int b = 0; b < d; ++b)
      for (int e = 0; e < d; ++e)
        for (int a = 0; a < d; ++a) out[b * d + e] += Rm[((a * d + b) * d + a) * d + e];
  } else if (s == S::R) {
    const auto& Rc = jets(S::Ricci, 0);
    Jet v(T);
    v.ord = Rc[0].ord;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) v += gi_[a * d + b] * Rc[a * d + b];
    out = {v};
  } else if (Y.vclass == VarClass::constant) {
    out = {Jet(T, chart_.constant(s))};
  } else {
    out = chart_.raw_field(s, x_, order_);
    if (s == S::pi && chart_.peps_ != 0 && chart_.pbump_) {
      Jet b = chart_.pbump_(x_, order_) * sqrtg_.reciprocal();
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += (chart_.peps_ * chart_.pe_[k]) * b;
    }
  }
  return jets_[key] = std::move(out);
}

const std::vector<double>& PointCache::field(int s, int nd) {
  auto key = std::make_pair(s, nd);
  auto it = vals_.find(key);
  if (it != vals_.end()) return it->second;
  const auto& J = jets(s, nd);
  std::vector<double> v(J.size());
  double w = is_density_sym(s) ? sqrtg() : 1.0;
  for (std::size_t k = 0; k < J.size(); ++k) {
    if (J[k].ord < 0) throw OracleError("jet order too low for " + sym(s).name);
    v[k] = w * J[k].value();
  }
  return vals_[key] = std::move(v);
}

NumTensor PointCache::evaluate_term(const Term& t) {
  int d = d_;
  std::vector<double> G(d * d), Gi(d * d);
  for (int k = 0; k < d * d; ++k) {
    G[k] = g_[k].value();
    Gi[k] = gi_[k].value();
  }
  std::vector<Index> fr = free_indices(t);
  std::set<int> free_ids;
  for (auto i : fr) free_ids.insert(i.id);
  std::vector<LT> facs;
  for (const auto& F : t.f) {
    const Symbol& Y = sym(F.sym);
    int nd = static_cast<int>(F.d.size());
    LT L;
    L.v = field(F.sym, nd);
    int r = nd + Y.nslots;
    for (int k = 0; k < r; ++k) {
      Index want = k < nd ? F.d[k] : F.s[k - nd];
      bool nat = k < nd ? false : Y.up[k - nd];
      if (want.up != nat) L.v = apply_matrix(L.v, r, k, d, want.up ? Gi : G);
      L.lab.push_back(want.id);
      L.up.push_back(want.up);
    }
    facs.push_back(take_traces(std::move(L), d));
  }
  double scale = t.c.to_double() * std::pow(sqrtg(), t.wpow) * std::pow(static_cast<double>(d), t.dimpow);
  LT acc;
  acc.v = {scale};
  std::vector<bool> used(facs.size(), false);
  for (std::size_t step = 0; step < facs.size(); ++step) {
    // greedy: the factor that keeps the running union smallest
    int best = -1;
    std::size_t best_u = ~std::size_t{0};
    for (std::size_t k = 0; k < facs.size(); ++k) {
      if (used[k]) continue;
      std::set<int> u(acc.lab.begin(), acc.lab.end());
      u.insert(facs[k].lab.begin(), facs[k].lab.end());
      if (u.size() < best_u) {
        best_u = u.size();
        best = static_cast<int>(k);
      }
    }
    used[best] = true;
    std::set<int> keep = free_ids;
    for (std::size_t k = 0; k < facs.size(); ++k)
      if (!used[k]) keep.insert(facs[k].lab.begin(), facs[k].lab.end());
    acc = contract(acc, facs[best], keep, d);
  }
  // reorder axes to the sorted free signature
  NumTensor out;
  out.dim = d;
  out.idx = fr;
  int r = static_cast<int>(fr.size());
  out.data.assign(ipow(d, r), 0.0);
  std::vector<int> pos(r);
  for (int k = 0; k < r; ++k)
    pos[k] = static_cast<int>(std::find(acc.lab.begin(), acc.lab.end(), fr[k].id) - acc.lab.begin());
  std::vector<int> ix(r);
  for (std::size_t flat = 0; flat < out.data.size(); ++flat) {
    std::size_t rem = flat;
    for (int k = r - 1; k >= 0; --k) {
      ix[k] = static_cast<int>(rem % d);
      rem /= d;
    }
    std::size_t src = 0;
    std::vector<int> jx(r);
    for (int k = 0; k < r; ++k) jx[pos[k]] = ix[k];
    for (int k = 0; k < r; ++k) src = src * d + jx[k];
    out.data[flat] = acc.v[src];
  }
  return out;
}

NumTensor PointCache::evaluate(const Expr& e) {
  NumTensor out;
  out.dim = d_;
  if (e.is_zero()) {
    out.data = {0.0};
    return out;
  }
  std::vector<double> G(d_ * d_), Gi(d_ * d_);
  for (int k = 0; k < d_ * d_; ++k) {
    G[k] = g_[k].value();
    Gi[k] = gi_[k].value();
  }
  bool first = true;
  for (const auto& t : e.terms) {
    NumTensor x = evaluate_term(t);
    if (first) {
      out = x;
      first = false;
      continue;
    }
    if (x.idx.size() != out.idx.size()) throw OracleError("inconsistent free indices");
    int r = static_cast<int>(x.idx.size());
    for (int k = 0; k < r; ++k) {
      if (x.idx[k].id != out.idx[k].id) throw OracleError("inconsistent free indices");
      if (x.idx[k].up != out.idx[k].up) x.data = apply_matrix(x.data, r, k, d_, out.idx[k].up ? Gi : G);
    }
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += x.data[k];
  }
  return out;
}

int required_order(const Expr& e) {
  int k = 1;
  for (const auto& t : e.terms)
    for (const auto& F : t.f) k = std::max(k, static_cast<int>(F.d.size()) + (is_curvature(F.sym) ? 2 : 0));
  return k + 1;
}

NumTensor evaluate(const Expr& e, const Chart& chart) {
  PointCache pc(chart, chart.point(), required_order(e));
  return pc.evaluate(e);
}

// ---------------------------------------------------------------- finite differences

namespace {
std::vector<std::pair<int, double>> stencil(int order) {
  switch (order) {
    case 2: return {{-1, -0.5}, {1, 0.5}};
    case 4: return {{-2, 1.0 / 12}, {-1, -2.0 / 3}, {1, 2.0 / 3}, {2, -1.0 / 12}};
    case 6: return {{-3, -1.0 / 60}, {-2, 3.0 / 20}, {-1, -3.0 / 4}, {1, 3.0 / 4}, {2, -3.0 / 20}, {3, 1.0 / 60}};
  }
  throw OracleError("unsupported stencil order");
}
}  // namespace

NumTensor fd_nabla(const FieldFn& F, const Chart& chart, Index i, int weight, double h) {
  int d = chart.dim();
  const auto& x0 = chart.point();
  NumTensor T0 = F(x0);
  int r = static_cast<int>(T0.idx.size());
  std::size_t n = T0.data.size();
  NumTensor out;
  out.dim = d;
  out.idx.push_back({i.id, false});
  out.idx.insert(out.idx.end(), T0.idx.begin(), T0.idx.end());
  out.data.assign(d * n, 0.0);
  auto st = stencil(chart.config().stencil_order);
  for (int a = 0; a < d; ++a)
    for (auto [s, w] : st) {
      auto x = x0;
      x[a] += s * h;
      NumTensor Ts = F(x);
      for (std::size_t k = 0; k < n; ++k) out.data[a * n + k] += w * Ts.data[k] / h;
    }
  PointCache pc(chart, x0, 1);
  std::vector<int> ix(r);
  for (int a = 0; a < d; ++a)
    for (std::size_t flat = 0; flat < n; ++flat) {
      std::size_t rem = flat;
      for (int k = r - 1; k >= 0; --k) {
        ix[k] = static_cast<int>(rem % d);
        rem /= d;
      }
      double v = 0;
      std::size_t stride = 1;
      for (int k = r - 1; k >= 0; --k) {
        for (int e = 0; e < d; ++e) {
          std::size_t other = flat + (static_cast<std::ptrdiff_t>(e) - ix[k]) * static_cast<std::ptrdiff_t>(stride);
          if (T0.idx[k].up)
            v += pc.christoffel(ix[k], a, e) * T0.data[other];
          else
            v -= pc.christoffel(e, a, ix[k]) * T0.data[other];
        }
        stride *= d;
      }
      for (int e = 0; e < d; ++e) v -= weight * pc.christoffel(e, e, a) * T0.data[flat];
      out.data[a * n + flat] += v;
    }
  if (i.up) {
    std::vector<double> Gi(d * d);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) Gi[a * d + b] = pc.ginv(a, b);
    out.data = apply_matrix(out.data, r + 1, 0, d, Gi);
    out.idx[0].up = true;
  }
  return out;
}

NumTensor fd_nabla_chain(const Expr& e, const std::vector<Index>& prefix, const Chart& chart, int weight, double h) {
  if (prefix.empty()) return evaluate(e, chart);
  std::vector<Index> rest(prefix.begin() + 1, prefix.end());
  FieldFn F = [&](const std::vector<double>& x) {
    Chart c = chart;
    c.set_point(x);
    return fd_nabla_chain(e, rest, c, weight, h);
  };
  return fd_nabla(F, chart, prefix.front(), weight, h);
}

std::vector<double> riemann_formula(const Chart& chart) {
  PointCache pc(chart, chart.point(), 3);
  return pc.field(S::Riem, 0);
}

double integrate(const Expr& density, const Chart& chart, int n) {
  int d = chart.dim();
  int ord = required_order(density);
  double cell = std::pow(2 * kPi / n, d);
  double sum = 0;
  std::vector<int> ix(d, 0);
  std::size_t total = ipow(n, d);
  std::vector<double> x(d);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (int k = d - 1; k >= 0; --k) {
      x[k] = 2 * kPi * static_cast<double>(rem % n) / n;
      rem /= n;
    }
    PointCache pc(chart, x, ord);
    sum += pc.evaluate(density).scalar();
  }
  return sum * cell;
}

std::function<Jet(const std::vector<double>&, int)> trig_bump(std::vector<double> center, int p) {
  return [center, p](const std::vector<double>& x, int order) {
    int d = static_cast<int>(x.size());
    auto T = jet_table(d, order);
    Jet r(T, 1.0);
    for (int i = 0; i < d; ++i) {
      double th = x[i] - center[i];
      Jet t(T, th);
      std::vector<int> e(d, 0);
      e[i] = 1;
      if (order > 0) t.c[T->find(e)] = 1.0;
      std::vector<double> dg(order + 1);
      for (int n = 0; n <= order; ++n) dg[n] = 0.5 * std::cos(th + n * kPi / 2) + (n == 0 ? 0.5 : 0.0);
      Jet u = t.compose(dg);
      for (int k = 0; k < p; ++k) r = r * u;
    }
    return r;
  };
}

FdResult fd_functional_derivative(const SmearedFunctional& F, Chart chart, Wrt wrt,
                                  std::function<Jet(const std::vector<double>&, int)> bump, std::vector<double> e,
                                  const Context& ctx, int grid, double eps) {
  auto I = [&](double s) {
    Chart c = chart;
    if (wrt == Wrt::metric)
      c.perturb_metric(s, bump, e);
    else
      c.perturb_momentum(s, bump, e);
    return integrate(F.density, c, grid);
  };
  auto D = [&](double h) { return (I(h) - I(-h)) / (2 * h); };
  double d1 = D(eps), d2 = D(eps / 2), d4 = D(eps / 4);
  double r1 = (4 * d2 - d1) / 3, r2 = (4 * d4 - d2) / 3;
  double scale = std::max({std::fabs(r2), std::fabs(d1), 1e-12});
  if (std::fabs(r1 - r2) > 1e-6 * scale) throw StepDegeneracy("Richardson estimates disagree; step size degenerate");
  // symbolic kernel contracted with the perturbation direction
  Expr K = wrt == Wrt::metric ? functional_derivative(F.density, wrt, up("a"), up("b"), ctx)
                              : functional_derivative(F.density, wrt, dn("a"), dn("b"), ctx);
  int d = chart.dim();
  int ord = std::max(required_order(K), 2);
  double cell = std::pow(2 * kPi / grid, d);
  double sum = 0;
  std::size_t total = ipow(grid, d);
  std::vector<double> x(d);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (int k = d - 1; k >= 0; --k) {
      x[k] = 2 * kPi * static_cast<double>(rem % grid) / grid;
      rem /= grid;
    }
    double b = bump(x, 0).value();
    if (b == 0) continue;
    PointCache pc(chart, x, ord);
    NumTensor k = pc.evaluate(K);
    if (k.idx.empty()) continue;  // kernel identically zero
    double v = 0;
    for (int a = 0; a < d * d; ++a) v += k.data[a] * e[a];
    sum += b * v;
  }
  FdResult r;
  r.fd = r2;
  r.kernel = sum * cell;
  r.rel = std::fabs(r.fd - r.kernel) / std::max({std::fabs(r.fd), std::fabs(r.kernel), 1e-12});
  return r;
}

}  // namespace cg::oracle
