#include "walkcap/capacity.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "walkcap/errors.hpp"

namespace walkcap {

bool GrowingCholesky::append(const double* g, double g0, double minPivot) {
  const std::size_t n = n_;
  const std::size_t off = data_.size();
  data_.resize(off + n + 1);
  double* r = data_.data() + off;
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* ri = row(i);
    double v = g[i];
    for (std::size_t j = 0; j < i; ++j) v -= ri[j] * r[j];
    v /= ri[i];
    r[i] = v;
    s += v * v;
  }
  const double piv = g0 - s;
  if (!(piv > minPivot * g0)) {
    data_.resize(off);
    return false;
  }
  r[n] = std::sqrt(piv);
  ++n_;
  return true;
}

void GrowingCholesky::truncate(std::size_t n) {
  if (n > n_) throw UsageError("cannot truncate a factor to a larger size");
  n_ = n;
  data_.resize(n * (n + 1) / 2);
}

void GrowingCholesky::forward(double* v) const {
  for (std::size_t i = 0; i < n_; ++i) {
    const double* ri = row(i);
    double s = v[i];
    for (std::size_t j = 0; j < i; ++j) s -= ri[j] * v[j];
    v[i] = s / ri[i];
  }
}

void GrowingCholesky::backward(double* v) const { backward(v, n_); }

void GrowingCholesky::backward(double* v, std::size_t m) const {
  if (m > n_) throw UsageError("backward solve beyond the factor size");
  for (std::size_t i = m; i-- > 0;) {
    const double* ri = row(i);
    const double xi = v[i] / ri[i];
    v[i] = xi;
    for (std::size_t j = 0; j < i; ++j) v[j] -= ri[j] * xi;
  }
}

double GrowingCholesky::condition_estimate() const {
  if (n_ == 0) return 1;
  double lo = diag(0), hi = diag(0);
  for (std::size_t i = 1; i < n_; ++i) {
    lo = std::min(lo, diag(i));
    hi = std::max(hi, diag(i));
  }
  return (hi / lo) * (hi / lo);
}

GrowingCholesky GrowingCholesky::from_lower(const double* colMajor, std::size_t n) {
  GrowingCholesky f;
  f.data_.resize(n * (n + 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    double* r = f.data_.data() + i * (i + 1) / 2;
    for (std::size_t j = 0; j <= i; ++j) r[j] = colMajor[j * n + i];
  }
  f.n_ = n;
  return f;
}

double EquilibriumSolution::e(const Point& x) const {
  const auto i = set.index_of(x);
  return i ? eq[*i] : 0.0;
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

std::vector<std::int64_t> flat_coords(const std::vector<Point>& pts, int d) {
  std::vector<std::int64_t> c(pts.size() * static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int k = 0; k < d; ++k) c[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(k)] = pts[i].x[static_cast<std::size_t>(k)];
  return c;
}

// fills the full symmetric matrix, column major
void fill_green_matrix(const std::vector<Point>& pts, const GreenKernel& kernel, double* m) {
  const std::size_t n = pts.size();
  const int d = kernel.d();
  const auto c = flat_coords(pts, d);
  const double g0 = kernel.origin();
  const auto dd = static_cast<std::size_t>(d);
  std::vector<std::int64_t> z(n * dd);
  std::vector<double> col(n);
  for (std::size_t j = 0; j < n; ++j) {
    m[j * n + j] = g0;
    const std::int64_t* cj = c.data() + j * dd;
    const std::size_t cnt = n - j - 1;
    for (std::size_t i = j + 1; i < n; ++i) {
      const std::int64_t* ci = c.data() + i * dd;
      std::int64_t* zi = z.data() + (i - j - 1) * dd;
      for (std::size_t k = 0; k < dd; ++k) zi[k] = ci[k] - cj[k];
    }
    kernel.evaluate_batch(z.data(), cnt, col.data());
    for (std::size_t i = j + 1; i < n; ++i) {
      const double v = col[i - j - 1];
      m[j * n + i] = v;
      m[i * n + j] = v;
    }
  }
}

void check_size(std::size_t n, const SolverOptions& opt) {
  if (n > opt.maxSize) {
    std::ostringstream os;
    os << "set of size " << n << " exceeds the solver cap " << opt.maxSize;
    throw UsageError(os.str());
  }
}

[[noreturn]] void factorization_failure(const RowMatrix& m, std::size_t n) {
  double lo = m(0, 0), hi = m(0, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    if (std::isfinite(v) && v > 0) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  std::ostringstream os;
  os << "Cholesky factorization of the Green matrix failed (n=" << n << ", pivot-based condition estimate "
     << (hi / lo) * (hi / lo) << ")";
  throw NumericError(os.str());
}

double max_residual_from_upper(const RowMatrix& m, double g0, const std::vector<double>& e) {
  // strict upper triangle still holds G; diagonal is G(0)
  const auto n = static_cast<Eigen::Index>(e.size());
  Eigen::Map<const Eigen::VectorXd> ev(e.data(), n);
  Eigen::VectorXd r = g0 * ev;
  r.noalias() += m.triangularView<Eigen::StrictlyUpper>() * ev;
  r.noalias() += m.triangularView<Eigen::StrictlyUpper>().transpose() * ev;
  return (r.array() - 1.0).abs().maxCoeff();
}

}  // namespace

double cube_capacity(int d, std::int64_t r) {
  if (r < 1 || r % 2 == 0) throw UsageError("cube_capacity needs an odd side");
  const std::int64_t h = (r - 1) / 2;
  if (h == 0) return 1 / shared_kernel(d).origin();
  const GreenKernel& kernel = shared_kernel(d);
  std::vector<Point> boundary;
  std::unordered_map<Point, std::size_t, PointHash> classOf;
  std::vector<Point> reps;
  std::vector<double> orbit;
  Point p(d);
  for (int i = 0; i < d; ++i) p[i] = -h;
  for (;;) {
    if (p.linf() == h) {
      const Point c = p.canonical();
      auto [it, fresh] = classOf.try_emplace(c, reps.size());
      if (fresh) {
        reps.push_back(c);
        orbit.push_back(0);
      }
      orbit[it->second] += 1;
      boundary.push_back(p);
    }
    int i = 0;
    while (i < d && p[i] == h) p[i++] = -h;
    if (i == d) break;
    ++p[i];
  }
  const auto m = static_cast<Eigen::Index>(reps.size());
  std::vector<std::size_t> cls(boundary.size());
  for (std::size_t b = 0; b < boundary.size(); ++b) cls[b] = classOf.at(boundary[b].canonical());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (std::size_t b = 0; b < boundary.size(); ++b)
      M(a, static_cast<Eigen::Index>(cls[b])) += kernel(reps[static_cast<std::size_t>(a)] - boundary[b]);
  const Eigen::VectorXd e = M.partialPivLu().solve(Eigen::VectorXd::Ones(m));
  double cap = 0;
  for (Eigen::Index a = 0; a < m; ++a) cap += orbit[static_cast<std::size_t>(a)] * e(a);
  if (!std::isfinite(cap)) throw NumericError("cube_capacity: singular orbit system");
  return cap;
}

std::vector<double> green_matrix(const std::vector<Point>& pts, const GreenKernel& kernel) {
  std::vector<double> m(pts.size() * pts.size());
  fill_green_matrix(pts, kernel, m.data());
  return m;
}

EquilibriumSolution equilibrium(const PointSet& A, const SolverOptions& opt) {
  EquilibriumSolution sol;
  sol.set = A;
  sol.factor = std::make_shared<GrowingCholesky>();
  const std::size_t n = A.size();
  if (n == 0) {
    sol.residual = 0;
    return sol;
  }
  check_size(n, opt);
  const GreenKernel& kernel = shared_kernel(A.d());
  RowMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  fill_green_matrix(A.points(), kernel, m.data());
  Eigen::LLT<Eigen::Ref<RowMatrix>> llt(m);
  if (llt.info() != Eigen::Success) factorization_failure(m, n);

  *sol.factor = GrowingCholesky::from_lower(m.data(), n);
  sol.y.assign(n, 1.0);
  sol.factor->forward(sol.y.data());
  sol.eq = sol.y;
  sol.factor->backward(sol.eq.data());
  sol.cap = 0;
  for (double v : sol.y) sol.cap += v * v;
  sol.residual = max_residual_from_upper(m, kernel.origin(), sol.eq);
  if (!(sol.residual <= opt.residualTolerance)) {
    std::ostringstream os;
    os << "equilibrium residual " << sol.residual << " exceeds " << opt.residualTolerance;
    throw NumericError(os.str());
  }
  return sol;
}

double capacity(const PointSet& A, const SolverOptions& opt) {
  if (A.empty()) return 0;
  if (A.size() == 1) return 1.0 / shared_kernel(A.d()).origin();
  const auto caps = prefix_capacities(A.points(), opt);
  return caps.back();
}

std::vector<double> prefix_capacities(const std::vector<Point>& pts, const SolverOptions& opt) {
  const std::size_t n = pts.size();
  std::vector<double> caps(n);
  if (n == 0) return caps;
  check_size(n, opt);
  const GreenKernel& kernel = shared_kernel(pts.front().d);
  RowMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  fill_green_matrix(pts, kernel, m.data());
  Eigen::LLT<Eigen::Ref<RowMatrix>> llt(m);
  if (llt.info() != Eigen::Success) factorization_failure(m, n);
  Eigen::VectorXd y = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  m.triangularView<Eigen::Lower>().solveInPlace(y);
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    s += y(static_cast<Eigen::Index>(i)) * y(static_cast<Eigen::Index>(i));
    caps[i] = s;
  }
  return caps;
}

void refresh_measure(EquilibriumSolution& sol) {
  sol.eq = sol.y;
  sol.factor->backward(sol.eq.data());
}

void extend_in_place(EquilibriumSolution& sol, const Point& p, bool updateMeasure) {
  if (sol.set.contains(p)) throw UsageError("point " + p.str() + " is already in the set");
  if (!sol.factor) sol.factor = std::make_shared<GrowingCholesky>();
  const GreenKernel& kernel = shared_kernel(p.d);
  const std::size_t n = sol.set.size();
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = kernel(p - sol.set[i]);
  if (sol.factor.use_count() > 1) sol.factor = std::make_shared<GrowingCholesky>(*sol.factor);
  sol.set.insert(p);
  if (sol.factor->append(g.data(), kernel.origin())) {
    const double* r = sol.factor->row(n);
    double s = 1;
    for (std::size_t j = 0; j < n; ++j) s -= r[j] * sol.y[j];
    sol.y.push_back(s / r[n]);
    sol.cap += sol.y.back() * sol.y.back();
  } else {
    // bordering lost positive definiteness numerically: refactor from scratch
    EquilibriumSolution fresh = equilibrium(sol.set);
    fresh.refactorizations = sol.refactorizations + 1;
    sol = std::move(fresh);
    return;
  }
  sol.residual = -1;
  if (updateMeasure)
    refresh_measure(sol);
  else
    sol.eq.clear();
}

double capacity_with(const EquilibriumSolution& base, const std::vector<Point>& extra) {
  const std::size_t n = base.set.size();
  if (n == 0) return capacity(PointSet(extra.empty() ? 5 : extra.front().d, extra));
  const GreenKernel& kernel = shared_kernel(base.set.d());
  const int d = kernel.d();
  const auto dd = static_cast<std::size_t>(d);
  const GrowingCholesky& L = *base.factor;
  std::vector<Point> added;
  std::unordered_set<Point, PointHash> seen;
  std::vector<std::vector<double>> rows;  // rows of the extension, length n + k + 1
  std::vector<double> yNew;
  std::vector<std::int64_t> z(n * dd);
  std::vector<double> g(n);
  double cap = base.cap;
  for (const Point& p : extra) {
    if (base.set.contains(p) || !seen.insert(p).second) continue;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < dd; ++k) z[i * dd + k] = p.x[k] - base.set[i].x[k];
    kernel.evaluate_batch(z.data(), n, g.data());
    const std::size_t k = added.size();
    std::vector<double> r(n + k + 1);
    std::copy(g.begin(), g.end(), r.begin());
    L.forward(r.data());
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += r[i] * r[i];
    for (std::size_t a = 0; a < k; ++a) {
      const std::vector<double>& ra = rows[a];
      double v = kernel(p - added[a]);
      for (std::size_t j = 0; j < n + a; ++j) v -= ra[j] * r[j];
      v /= ra[n + a];
      r[n + a] = v;
      s += v * v;
    }
    const double piv = kernel.origin() - s;
    if (!(piv > 1e-12 * kernel.origin())) {
      PointSet all = base.set;
      for (const auto& q : extra) all.insert(q);
      return capacity(all);
    }
    r[n + k] = std::sqrt(piv);
    double t = 1;
    for (std::size_t j = 0; j < n; ++j) t -= r[j] * base.y[j];
    for (std::size_t a = 0; a < k; ++a) t -= r[n + a] * yNew[a];
    yNew.push_back(t / r[n + k]);
    cap += yNew.back() * yNew.back();
    rows.push_back(std::move(r));
    added.push_back(p);
  }
  return cap;
}

EquilibriumSolution extend(const EquilibriumSolution& sol, const Point& p) {
  EquilibriumSolution out = sol;
  extend_in_place(out, p, true);
  return out;
}

void truncate_in_place(EquilibriumSolution& sol, std::size_t n, bool updateMeasure) {
  if (n > sol.set.size()) throw UsageError("truncation beyond the set size");
  if (n == sol.set.size()) return;
  std::vector<Point> keep(sol.set.points().begin(), sol.set.points().begin() + static_cast<std::ptrdiff_t>(n));
  sol.set = PointSet(sol.set.d(), keep);
  if (sol.factor.use_count() > 1) sol.factor = std::make_shared<GrowingCholesky>(*sol.factor);
  sol.factor->truncate(n);
  sol.y.resize(n);
  sol.cap = 0;
  for (double v : sol.y) sol.cap += v * v;
  sol.residual = -1;
  if (updateMeasure)
    refresh_measure(sol);
  else
    sol.eq.clear();
}

double equilibrium_residual(const EquilibriumSolution& sol) {
  const GreenKernel& kernel = shared_kernel(sol.set.d());
  std::vector<double> e = sol.eq;
  if (e.size() != sol.set.size()) {
    e = sol.y;
    sol.factor->backward(e.data());
  }
  double worst = 0;
  const std::size_t n = sol.set.size();
  for (std::size_t i = 0; i < n; ++i) {
    double s = kernel.origin() * e[i];
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) s += kernel(sol.set[i] - sol.set[j]) * e[j];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

namespace {

double green_upper_constant(int d) {
  static std::array<double, kMaxDim + 1> values{};
  static std::array<std::once_flag, kMaxDim + 1> flags;
  std::call_once(flags[static_cast<std::size_t>(d)],
                 [d] { values[static_cast<std::size_t>(d)] = fit_green_bounds(shared_kernel(d), 30).C; });
  return values[static_cast<std::size_t>(d)];
}

}  // namespace

McCapacity capacity_mc(const PointSet& A, std::size_t walks, double escapeRadius, std::uint64_t seed) {
  if (walks == 0) throw UsageError("capacity_mc needs at least one walk");
  if (A.empty()) throw UsageError("capacity_mc needs a nonempty set");
  const int d = A.d();
  if (escapeRadius < 4.0 * A.diameter()) throw UsageError("escape radius must be at least 4 diam(A)");
  std::array<double, kMaxDim> center{};
  for (int i = 0; i < d; ++i) center[static_cast<std::size_t>(i)] = 0.5 * static_cast<double>(A.lo().x[i] + A.hi().x[i]);
  double rad = 0;
  for (const auto& x : A) {
    double s = 0;
    for (int i = 0; i < d; ++i) {
      const double t = static_cast<double>(x.x[i]) - center[static_cast<std::size_t>(i)];
      s += t * t;
    }
    rad = std::max(rad, std::sqrt(s));
  }
  if (escapeRadius <= rad + 1) throw UsageError("escape radius must exceed the radius of A");
  const double R2 = escapeRadius * escapeRadius;

  McCapacity out;
  out.walks = walks;
  out.escapeRadius = escapeRadius;
  double var = 0;
  for (std::size_t a = 0; a < A.size(); ++a) {
    Rng rng(seed, a);
    std::size_t escaped = 0;
    for (std::size_t w = 0; w < walks; ++w) {
      Point p = A[a];
      while (true) {
        const auto m = rng.below(static_cast<std::uint64_t>(2 * d));
        p.x[m >> 1] += (m & 1) ? -1 : 1;
        if (A.contains(p)) break;
        double s = 0;
        for (int i = 0; i < d; ++i) {
          const double t = static_cast<double>(p.x[i]) - center[static_cast<std::size_t>(i)];
          s += t * t;
        }
        if (s >= R2) {
          ++escaped;
          break;
        }
      }
    }
    const double q = static_cast<double>(escaped) / static_cast<double>(walks);
    out.estimate += q;
    var += q * (1 - q) / static_cast<double>(walks);
  }
  out.stdError = std::sqrt(var);
  // a walk outside the ball returns with probability at most Cap(A) max_y G(z - y)
  const double gap = escapeRadius - rad;
  out.biasBound = out.estimate * out.estimate * green_upper_constant(d) / (std::pow(gap, d - 2) + 1.0);
  return out;
}

}  // namespace walkcap
