#include "walkcap/green.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>
#include <gsl/gsl_sf_bessel.h>
#include <gsl/gsl_sf_zeta.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <tuple>
#include <memory>
#include <sstream>

#include "walkcap/errors.hpp"

namespace walkcap {

namespace {

struct GslInit {
  GslInit() { gsl_set_error_handler_off(); }
};
const GslInit gslInit;

// e^{-z} I_k(z) for k = 0..kmax; at large z upward recurrence from I_0, I_1 is accurate
// and avoids the loss of the downward recurrence
int bessel_scaled_array(int kmax, double z, double* out) {
  if (z > 8.0 * (static_cast<double>(kmax) * kmax + 1.0) && z > 50.0) {
    out[0] = gsl_sf_bessel_I0_scaled(z);
    if (kmax >= 1) out[1] = gsl_sf_bessel_I1_scaled(z);
    for (int k = 1; k < kmax; ++k) out[k + 1] = out[k - 1] - (2.0 * k / z) * out[k];
    return GSL_SUCCESS;
  }
  const int st = gsl_sf_bessel_In_scaled_array(0, kmax, z, out);
  if (st != GSL_EUNDRFLW) return st;
  // high orders underflow at small argument: fill order by order, zero past the first underflow
  bool under = false;
  for (int k = 0; k <= kmax; ++k) {
    gsl_sf_result r;
    if (!under) {
      const int sk = gsl_sf_bessel_In_scaled_e(k, z, &r);
      if (sk == GSL_EUNDRFLW || (sk == GSL_SUCCESS && r.val == 0)) {
        under = true;
      } else if (sk != GSL_SUCCESS) {
        return sk;
      }
    }
    out[k] = under ? 0.0 : r.val;
  }
  return GSL_SUCCESS;
}

struct BesselProduct {
  int d;
  std::array<int, kMaxDim> k{};
  int kmax = 0;
  mutable std::vector<double> buf;

  explicit BesselProduct(const Point& x) : d(x.d) {
    for (int i = 0; i < d; ++i) {
      k[i] = static_cast<int>(x.x[i] < 0 ? -x.x[i] : x.x[i]);
      kmax = std::max(kmax, k[i]);
    }
    buf.resize(static_cast<std::size_t>(kmax) + 1);
  }

  // prod_i e^{-t/d} I_{k_i}(t/d)
  double operator()(double t) const {
    const double z = t / d;
    if (z == 0) return kmax == 0 ? 1.0 : 0.0;
    if (kmax == 0) {
      const double v = gsl_sf_bessel_I0_scaled(z);
      double p = 1;
      for (int i = 0; i < d; ++i) p *= v;
      return p;
    }
    if (bessel_scaled_array(kmax, z, buf.data()) != GSL_SUCCESS)
      throw NumericError("Bessel array evaluation failed at t=" + std::to_string(t));
    double p = 1;
    for (int i = 0; i < d; ++i) p *= buf[static_cast<std::size_t>(k[i])];
    return p;
  }

  // first-order large-t coefficient: integrand ~ (d/(2 pi t))^{d/2} (1 - c/t)
  double tail_c() const {
    double s = 0;
    for (int i = 0; i < d; ++i) s += 4.0 * k[i] * k[i] - 1.0;
    return d * s / 8.0;
  }
};

struct GslCall {
  std::function<double(double)> f;
  std::size_t count = 0;
};

double gsl_trampoline(double t, void* p) {
  auto* c = static_cast<GslCall*>(p);
  ++c->count;
  return c->f(t);
}

class Workspace {
 public:
  explicit Workspace(std::size_t n) : w_(gsl_integration_workspace_alloc(n)), n_(n) {}
  ~Workspace() { gsl_integration_workspace_free(w_); }
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;
  gsl_integration_workspace* get() { return w_; }
  std::size_t limit() const { return n_; }

 private:
  gsl_integration_workspace* w_;
  std::size_t n_;
};

void check_status(int status, const Point& x, const char* part, double value, double err) {
  if (status == GSL_SUCCESS) return;
  // roundoff detection fires near machine precision; the error estimate is still usable
  if (status == GSL_EROUND && err <= 1e-9 * std::abs(value)) return;
  std::ostringstream os;
  os.precision(17);
  os << "quadrature did not converge for x=" << x << " on " << part << ": " << gsl_strerror(status)
     << " (value " << value << ", abserr " << err << ")";
  throw NumericError(os.str());
}

// moment = 0 gives G, moment = 1 gives G*G
QuadratureResult bessel_integral(const Point& x, double relTol, int moment) {
  const int d = x.d;
  if (d < 3) throw UsageError("Green function needs d >= 3");
  if (moment == 1 && d < 5) throw UsageError("G*G is finite only for d >= 5");
  BesselProduct f(x);
  const double k2 = static_cast<double>(f.kmax) * f.kmax + 1.0;
  const double tMax = (moment == 0 ? 1e7 : 1e12) * k2 * d;
  const double sMax = std::log(tMax);

  Workspace ws(4000);
  QuadratureResult out;
  GslCall tail{[&](double s) {
    const double t = std::exp(s);
    return f(t) * (moment == 0 ? t : t * t);
  }};
  gsl_function gf{&gsl_trampoline, &tail};
  double vb = 0, eb = 0;
  int st = gsl_integration_qag(&gf, 0.0, sMax, 0.0, relTol, ws.limit(), GSL_INTEG_GAUSS61, ws.get(), &vb, &eb);
  check_status(st, x, "[1, tmax] in log scale", vb, eb);

  GslCall head{[&](double t) { return moment == 0 ? f(t) : t * f(t); }};
  gsl_function gh{&gsl_trampoline, &head};
  double va = 0, ea = 0;
  st = gsl_integration_qag(&gh, 0.0, 1.0, 1e-3 * relTol * std::abs(vb), relTol, ws.limit(), GSL_INTEG_GAUSS41,
                           ws.get(), &va, &ea);
  check_status(st, x, "[0, 1]", va, ea);

  const double s = 0.5 * d;
  const double amp = std::pow(d / (2.0 * M_PI), s);
  const double c = f.tail_c();
  double vt;
  if (moment == 0)
    vt = amp * (std::pow(tMax, 1.0 - s) / (s - 1.0) - c * std::pow(tMax, -s) / s);
  else
    vt = amp * (std::pow(tMax, 2.0 - s) / (s - 2.0) - c * std::pow(tMax, 1.0 - s) / (s - 1.0));

  out.value = va + vb + vt;
  out.abserr = ea + eb + std::abs(vt) * 1e-6;
  out.evaluations = head.count + tail.count;
  return out;
}

}  // namespace

QuadratureResult green_quadrature(const Point& x, double relTol) { return bessel_integral(x, relTol, 0); }

QuadratureResult green_star_green_quadrature(const Point& x, double relTol) {
  return bessel_integral(x, relTol, 1);
}

std::vector<double> transition_probabilities(const Point& x, std::size_t N) {
  const int d = x.d;
  if (d < 1) throw UsageError("dimension must be positive");
  constexpr double kTiny = 1e-280;

  auto one_dim = [N](std::int64_t k) {
    std::vector<double> q(N + 1, 0.0);
    k = k < 0 ? -k : k;
    if (static_cast<std::size_t>(k) > N) return q;
    double v = std::ldexp(1.0, static_cast<int>(-k));
    for (std::size_t m = static_cast<std::size_t>(k); m <= N; m += 2) {
      q[m] = v;
      const double a = 0.5 * static_cast<double>(m + static_cast<std::size_t>(k));
      const double md = static_cast<double>(m);
      v *= (md + 2.0) * (md + 1.0) / (4.0 * (a + 1.0) * (md - a + 1.0));
      if (v < kTiny) v = 0;
    }
    return q;
  };

  std::vector<double> prev = one_dim(x.x[0]);
  std::vector<double> next(N + 1), row(N + 1);
  for (int j = 2; j <= d; ++j) {
    const std::vector<double> q = one_dim(x.x[static_cast<std::size_t>(j - 1)]);
    const std::int64_t kj = x.x[static_cast<std::size_t>(j - 1)] < 0 ? -x.x[static_cast<std::size_t>(j - 1)]
                                                                       : x.x[static_cast<std::size_t>(j - 1)];
    const double p = 1.0 / j;
    std::fill(row.begin(), row.end(), 0.0);
    row[0] = 1.0;
    std::size_t lo = 0, hi = 0;  // nonzero window of the binomial row
    for (std::size_t n = 0; n <= N; ++n) {
      if (n > 0) {
        row[hi + 1] = 0.0;
        for (std::size_t m = hi + 1; m > lo; --m) row[m] = row[m] * (1.0 - p) + row[m - 1] * p;
        row[lo] *= (1.0 - p);
        ++hi;
        while (lo < hi && row[lo] < kTiny) row[lo++] = 0.0;
        while (hi > lo && row[hi] < kTiny) row[hi--] = 0.0;
      }
      double s = 0;
      std::size_t m0 = std::max<std::size_t>(lo, static_cast<std::size_t>(kj));
      if ((m0 - static_cast<std::size_t>(kj)) & 1) ++m0;
      for (std::size_t m = m0; m <= hi && m <= n; m += 2) s += row[m] * q[m] * prev[n - m];
      next[n] = s;
    }
    std::swap(prev, next);
  }
  return prev;
}

double green_truncated(const Point& x, std::size_t T) {
  if (T > 200000) throw UsageError("green_truncated: T too large for dynamic programming, use Monte Carlo mode");
  if (static_cast<std::size_t>(x.l1()) > T) return 0.0;
  const auto p = transition_probabilities(x, T);
  double s = 0;
  for (double v : p) s += v;
  return s;
}

namespace {

// p_n(x) ~ pbar_n(x) (1 + Q(x,n)/n), Q from the fourth-order cumulants of the step law
double lclt_first_order(const Point& x, double n) {
  const int d = x.d;
  double he4 = 0, he2 = 0, he2sq = 0;
  for (int i = 0; i < d; ++i) {
    const double u2 = d * static_cast<double>(x.x[i] * x.x[i]) / n;
    he4 += u2 * u2 - 6.0 * u2 + 3.0;
    he2 += u2 - 1.0;
    he2sq += (u2 - 1.0) * (u2 - 1.0);
  }
  return (d / 24.0 - 0.125) * he4 - 0.125 * (he2 * he2 - he2sq);
}

double lclt_lead(const Point& x, double n) {
  const double s = 0.5 * x.d;
  return 2.0 * std::pow(x.d / (2.0 * M_PI * n), s) * std::exp(-0.5 * x.d * x.norm2() / n);
}

}  // namespace

double lclt_tail(const Point& x, std::size_t N, double c2) {
  const int d = x.d;
  const double s = 0.5 * d;
  const double C = 2.0 * std::pow(d / (2.0 * M_PI), s);
  const double a = 0.5 * d * x.norm2();
  const std::size_t parity = static_cast<std::size_t>(x.l1()) & 1;
  std::size_t n = N + 1;
  if ((n & 1) != parity) ++n;
  const std::size_t M = std::max<std::size_t>(64 * (N + 1), 1 << 16);
  double sum = 0;
  for (; n < M; n += 2) {
    const double nd = static_cast<double>(n);
    sum += lclt_lead(x, nd) * (1.0 + lclt_first_order(x, nd) / nd + c2 / (nd * nd));
  }
  // remainder over n = M, M+2, ...: n^{-s}(1 + (q0 - a)/n), q0 = -d/4
  const double q = 0.5 * static_cast<double>(n);
  auto hz = [&](double sig) { return std::pow(2.0, -sig) * gsl_sf_hzeta(sig, q); };
  sum += C * (hz(s) + (-0.25 * d - a) * hz(s + 1));
  return sum;
}

GreenDpEstimate green_dp(const Point& x, std::size_t N) {
  const auto p = transition_probabilities(x, N);
  GreenDpEstimate e;
  e.N = N;
  for (double v : p) e.partial += v;
  std::size_t n = N;
  if ((n & 1) != (static_cast<std::size_t>(x.l1()) & 1)) --n;
  const double nd = static_cast<double>(n);
  e.fitB = nd * nd * (p[n] / lclt_lead(x, nd) - 1.0 - lclt_first_order(x, nd) / nd);
  e.tail = lclt_tail(x, N, e.fitB);
  e.value = e.partial + e.tail;
  return e;
}

ReturnEstimate return_probability_dp(int d, std::size_t N) {
  const Point o = Point::origin(d);
  const auto p = transition_probabilities(o, N);
  std::vector<double> f(N + 1, 0.0);
  for (std::size_t n = 1; n <= N; ++n) {
    double s = p[n];
    for (std::size_t k = 1; k < n; ++k) s -= f[k] * p[n - k];
    f[n] = s;
  }
  ReturnEstimate r;
  for (double v : f) r.partial += v;
  const GreenDpEstimate g = green_dp(o, N);
  // f_n ~ p_n / G(0)^2 for transient walks
  r.tail = g.tail / (g.value * g.value);
  r.pReturn = r.partial + r.tail;
  return r;
}

GreenCache::GreenCache(int d, double precisionTarget) : d_(d), precision_(precisionTarget) {
  if (d < 3 || d > kMaxDim) throw UsageError("GreenCache needs 3 <= d <= 8");
}

QuadratureResult GreenCache::evaluate(const Point& x) const {
  const QuadratureResult q = green_quadrature(x, std::min(1e-12, 0.01 * precision_));
  if (!(q.abserr <= precision_ * q.value)) {
    std::ostringstream os;
    os.precision(17);
    os << "Green quadrature error estimate " << q.abserr << " exceeds target for x=" << x << " (value " << q.value
       << ")";
    throw NumericError(os.str());
  }
  return q;
}

double GreenCache::operator()(const Point& x) {
  if (x.d != d_) throw UsageError("GreenCache dimension mismatch");
  const Point key = x.canonical();
  {
    std::shared_lock lock(mutex_);
    auto it = values_.find(key);
    if (it != values_.end()) return it->second;
  }
  const double v = evaluate(key).value;
  std::unique_lock lock(mutex_);
  return values_.emplace(key, v).first->second;
}

std::size_t GreenCache::size() const {
  std::shared_lock lock(mutex_);
  return values_.size();
}

bool GreenCache::contains(const Point& x) const {
  std::shared_lock lock(mutex_);
  return values_.count(x.canonical()) != 0;
}

double GreenCache::harmonic_residual(const Point& x) {
  double s = 0;
  for (int i = 0; i < d_; ++i)
    for (int sg : {1, -1}) s += (*this)(x + Point::unit(d_, i, sg));
  return s / (2.0 * d_) - (*this)(x) + (x.is_origin() ? 1.0 : 0.0);
}

void GreenCache::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path);
  std::vector<std::pair<Point, double>> rows;
  {
    std::shared_lock lock(mutex_);
    rows.assign(values_.begin(), values_.end());
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  char buf[64];
  for (const auto& [p, v] : rows) {
    for (int i = 0; i < d_; ++i) out << p.x[i] << ' ';
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf << '\n';
  }
}

std::size_t GreenCache::load(const std::string& path, double tolerance) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  std::unordered_map<Point, double, PointHash> loaded;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Point p(d_);
    for (int i = 0; i < d_; ++i)
      if (!(ls >> p.x[i])) throw UsageError(path + ": malformed cache line");
    double v;
    if (!(ls >> v)) throw UsageError(path + ": malformed cache line");
    loaded[p.canonical()] = v;
  }
  for (const auto& [p, v] : loaded) {
    double s = 0;
    bool complete = true;
    for (int i = 0; i < d_ && complete; ++i)
      for (int sg : {1, -1}) {
        auto it = loaded.find((p + Point::unit(d_, i, sg)).canonical());
        if (it == loaded.end()) {
          complete = false;
          break;
        }
        s += it->second;
      }
    if (!complete) continue;
    const double r = s / (2.0 * d_) - v + (p.is_origin() ? 1.0 : 0.0);
    if (std::abs(r) > tolerance)
      throw NumericError(path + ": harmonicity residual " + std::to_string(r) + " at " + p.str());
  }
  std::unique_lock lock(mutex_);
  for (const auto& kv : loaded) values_.emplace(kv.first, kv.second);
  return loaded.size();
}

GreenCache& shared_green_cache(int d) {
  static std::array<std::unique_ptr<GreenCache>, kMaxDim + 1> caches;
  static std::array<std::once_flag, kMaxDim + 1> flags;
  if (d < 3 || d > kMaxDim) throw UsageError("Green function needs 3 <= d <= 8");
  std::call_once(flags[static_cast<std::size_t>(d)],
                 [d] { caches[static_cast<std::size_t>(d)] = std::make_unique<GreenCache>(d); });
  return *caches[static_cast<std::size_t>(d)];
}

double green(const Point& x) { return shared_green_cache(x.d)(x); }

namespace {

double factorial(int n) { return std::tgamma(n + 1.0); }

struct Dual {
  double v = 0, e = 0;  // value and derivative in the exponent
};
Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.v * b.e + a.e * b.v}; }

Dual falling_dual(double a, int q) {
  Dual r{1, 0};
  for (int i = 0; i < q; ++i) r = r * Dual{a - i, 1};
  return r;
}

Dual deriv_coef_dual(int m, int k, double alpha) {
  const double c = factorial(m) / (factorial(k) * factorial(m - 2 * k)) * std::pow(2.0, m - 2 * k);
  Dual f = falling_dual(alpha, m - k);
  return {c * f.v, c * f.e};
}

bool gamma_pole(double z) { return z <= 0 && std::abs(z - std::round(z)) < 1e-12; }

// Fourier transform of |theta|^{-2a} on R^d is c_a |x|^{2a-d}
double ft_const(int d, int a) {
  return std::tgamma(0.5 * d - a) / (std::pow(4.0, a) * std::pow(M_PI, 0.5 * d) * std::tgamma(static_cast<double>(a)));
}

}  // namespace

int GreenKernel::default_near_radius(int d) {
  switch (d) {
    case 3:
    case 4:
    case 5:
      return 20;
    case 6:
      return 16;
    case 7:
      return 16;
    default:
      return 14;
  }
}

int GreenKernel::default_far_order(int d) { return d <= 6 ? 6 : 8; }

GreenKernel::GreenKernel(int d, int nearRadius, int farOrder, double farTolerance)
    : d_(d), radius_(nearRadius < 0 ? default_near_radius(d) : nearRadius), farOrder_(farOrder < 0 ? default_far_order(d) : farOrder), farTol_(farTolerance) {
  if (d < 3 || d > kMaxDim) throw UsageError("GreenKernel needs 3 <= d <= 8");
  binom_.assign(static_cast<std::size_t>(radius_ + d_ + 1), std::vector<std::uint64_t>(static_cast<std::size_t>(d_ + 2), 0));
  for (std::size_t n = 0; n < binom_.size(); ++n) {
    binom_[n][0] = 1;
    for (std::size_t k = 1; k < binom_[n].size(); ++k)
      binom_[n][k] = n == 0 ? 0 : binom_[n - 1][k - 1] + binom_[n - 1][k];
  }
  build_table();
  build_far_terms();

  // cross-check the product rule against adaptive quadrature
  std::vector<Point> probes{Point::origin(d), Point::unit(d, 0)};
  Point p(d);
  for (int i = 0; i < d; ++i) p.x[i] = (i * 3) % (radius_ + 1);
  probes.push_back(p);
  Point q(d);
  q.x[0] = radius_;
  probes.push_back(q);
  for (const auto& x : probes) {
    const double ref = green_quadrature(x, 1e-13).value;
    const double got = (*this)(x);
    if (std::abs(got - ref) > 1e-11 * ref) {
      std::ostringstream os;
      os.precision(17);
      os << "Green kernel table disagrees with adaptive quadrature at " << x << ": " << got << " vs " << ref;
      throw NumericError(os.str());
    }
  }
}

std::size_t GreenKernel::rank(std::int64_t* a) const {
  // a sorted descending, all <= radius
  std::size_t r = 0;
  for (int i = 0; i < d_; ++i)
    r += binom_[static_cast<std::size_t>(a[i] + d_ - 1 - i)][static_cast<std::size_t>(d_ - i)];
  return r;
}

void GreenKernel::build_table() {
  const std::size_t R = static_cast<std::size_t>(radius_);
  table_.assign(binom_[R + static_cast<std::size_t>(d_)][static_cast<std::size_t>(d_)], 0.0);

  // nodes: Gauss-Legendre on t in [0,1], then panels in s = log t
  std::vector<double> nodes, weights;
  auto add_panel = [&](double a, double b, std::size_t n, bool logScale) {
    gsl_integration_glfixed_table* tab = gsl_integration_glfixed_table_alloc(n);
    for (std::size_t i = 0; i < n; ++i) {
      double xi, wi;
      gsl_integration_glfixed_point(a, b, i, &xi, &wi, tab);
      if (logScale) {
        const double t = std::exp(xi);
        nodes.push_back(t);
        weights.push_back(wi * t);
      } else {
        nodes.push_back(xi);
        weights.push_back(wi);
      }
    }
    gsl_integration_glfixed_table_free(tab);
  };
  add_panel(0.0, 1.0, 32, false);
  const double kmax2 = static_cast<double>(R * R + 1);
  const double tMax = 1e7 * kmax2 * d_;
  const double sMax = std::log(tMax);
  const int panels = static_cast<int>(std::ceil(sMax / 0.5));
  for (int i = 0; i < panels; ++i) add_panel(sMax * i / panels, sMax * (i + 1) / panels, 16, true);

  std::vector<double> bessel(nodes.size() * (R + 1));
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    double* row = bessel.data() + n * (R + 1);
    if (bessel_scaled_array(static_cast<int>(R), nodes[n] / d_, row) != GSL_SUCCESS)
      throw NumericError("Bessel table construction failed");
  }

  const double s = 0.5 * d_;
  const double amp = std::pow(d_ / (2.0 * M_PI), s);
  std::array<std::int64_t, kMaxDim> a{};
  a.fill(0);
  std::vector<double> acc(nodes.size());
  while (true) {
    double sum = 0;
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      const double* row = bessel.data() + n * (R + 1);
      double prod = weights[n];
      for (int i = 0; i < d_; ++i) prod *= row[a[static_cast<std::size_t>(i)]];
      sum += prod;
    }
    double c = 0;
    for (int i = 0; i < d_; ++i) c += 4.0 * static_cast<double>(a[i] * a[i]) - 1.0;
    c *= d_ / 8.0;
    sum += amp * (std::pow(tMax, 1.0 - s) / (s - 1.0) - c * std::pow(tMax, -s) / s);
    std::array<std::int64_t, kMaxDim> sorted = a;
    table_[rank(sorted.data())] = sum;

    // next descending tuple a_0 >= a_1 >= ... >= a_{d-1}
    int i = d_ - 1;
    while (i >= 0) {
      const std::int64_t cap = i == 0 ? static_cast<std::int64_t>(R) : a[static_cast<std::size_t>(i - 1)];
      if (a[static_cast<std::size_t>(i)] < cap) {
        ++a[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < d_; ++j) a[static_cast<std::size_t>(j)] = 0;
        break;
      }
      --i;
    }
    if (i < 0) break;
  }
}

namespace {

using Partition = std::vector<std::vector<int>>;

void set_partitions(int n, std::vector<Partition>& out) {
  std::vector<int> label(static_cast<std::size_t>(n), 0);
  std::function<void(int, int)> rec = [&](int i, int blocks) {
    if (i == n) {
      Partition p(static_cast<std::size_t>(blocks));
      for (int j = 0; j < n; ++j) p[static_cast<std::size_t>(label[static_cast<std::size_t>(j)])].push_back(j);
      out.push_back(p);
      return;
    }
    for (int b = 0; b <= blocks; ++b) {
      label[static_cast<std::size_t>(i)] = b;
      rec(i + 1, std::max(blocks, b + 1));
    }
  };
  rec(0, 0);
}

}  // namespace

void GreenKernel::build_far_terms() {
  const int d = d_;
  std::map<std::tuple<std::vector<int>, int, bool>, double> acc;

  // 1/(1 - phi) = (2d/|t|^2) sum_k u^k, u = sum_{m>=2} (-1)^m 2 S_{2m} / ((2m)! |t|^2);
  // S_{2m} maps to (-1)^m D_{2m} and |t|^{-2a} to c_a r^{2a-d}. The D's commute, so
  // compositions are merged by their sorted derivative orders.
  std::map<std::vector<int>, double> operators;
  std::function<void(int, std::vector<int>&)> compositions = [&](int left, std::vector<int>& ms) {
    if (left == 0) {
      double w = 1;
      std::vector<int> orders;
      for (int m : ms) {
        w *= 2.0 / factorial(2 * m);  // (-1)^m from the symbol cancels (-1)^m from the transform
        orders.push_back(2 * m);
      }
      std::sort(orders.begin(), orders.end());
      operators[orders] += w;
      return;
    }
    for (int part = 1; part <= left; ++part) {
      ms.push_back(part + 1);
      compositions(left - part, ms);
      ms.pop_back();
    }
  };
  for (int L = 0; L <= farOrder_; ++L) {
    std::vector<int> ms;
    compositions(L, ms);
  }

  std::map<std::vector<int>, std::vector<std::pair<std::vector<int>, double>>> moebius;
  auto distinct_sum = [&](const std::vector<int>& expo) -> const std::vector<std::pair<std::vector<int>, double>>& {
    // sum over distinct indices of prod x_slot^expo, as power sums (Moebius over slot partitions)
    auto it = moebius.find(expo);
    if (it != moebius.end()) return it->second;
    std::map<std::vector<int>, double> out;
    std::vector<Partition> slotParts;
    set_partitions(static_cast<int>(expo.size()), slotParts);
    for (const auto& sp : slotParts) {
      double mu = 1;
      std::vector<int> pidx;
      for (const auto& c : sp) {
        const int sz = static_cast<int>(c.size());
        mu *= ((sz - 1) % 2 ? -1.0 : 1.0) * factorial(sz - 1);
        int e = 0;
        for (int i : c) e += expo[static_cast<std::size_t>(i)];
        if (e == 0)
          mu *= d;
        else
          pidx.push_back(e);
      }
      std::sort(pidx.begin(), pidx.end());
      out[pidx] += mu;
    }
    return moebius.emplace(expo, std::vector<std::pair<std::vector<int>, double>>(out.begin(), out.end())).first->second;
  };

  for (const auto& [orders, wOps] : operators) {
    const int a = static_cast<int>(orders.size()) + 1;
    const double alpha0 = 0.5 * (2.0 * a - d);
    const bool pole = gamma_pole(0.5 * d - a);
    double w = 2.0 * d * wOps;
    if (pole) {
      // log part of the transform at a pole of Gamma(d/2 - a); the polynomial part is
      // annihilated by the derivatives. Handled as d/dalpha of (r^2)^alpha / 2.
      const int n = a - d / 2;
      w *= 2.0 * ((n % 2) ? 1.0 : -1.0) /
           (factorial(n) * std::pow(4.0, a) * std::pow(M_PI, 0.5 * d) * std::tgamma(static_cast<double>(a)));
    } else {
      w *= ft_const(d, a);
    }

    // sum over index tuples: coinciding indices merge factors into one block
    std::map<std::vector<int>, double> blockSets;
    std::vector<Partition> parts;
    set_partitions(static_cast<int>(orders.size()), parts);
    for (const auto& part : parts) {
      std::vector<int> blocks;
      for (const auto& block : part) {
        int m = 0;
        for (int i : block) m += orders[static_cast<std::size_t>(i)];
        blocks.push_back(m);
      }
      std::sort(blocks.begin(), blocks.end());
      blockSets[blocks] += 1;
    }

    for (const auto& [blocks, count] : blockSets) {
      // key: sorted slot exponents and the drop in alpha
      std::map<std::pair<std::vector<int>, int>, Dual> cur{{{{}, 0}, Dual{w * count, 0}}};
      for (int m : blocks) {
        std::map<std::pair<std::vector<int>, int>, Dual> nxt;
        for (const auto& [key, coef] : cur)
          for (int k = 0; 2 * k <= m; ++k) {
            const Dual c = coef * deriv_coef_dual(m, k, alpha0 - key.second);
            if (c.v == 0 && c.e == 0) continue;
            auto expo = key.first;
            expo.insert(std::upper_bound(expo.begin(), expo.end(), m - 2 * k), m - 2 * k);
            Dual& slot = nxt[{expo, key.second + m - k}];
            slot.v += c.v;
            slot.e += c.e;
          }
        cur.swap(nxt);
      }
      for (const auto& [key, coef] : cur) {
        // r^{2 alpha} with alpha = alpha0 - drop; the term is r^{2-d} r^{-2q} prod P
        const int q = key.second - a + 1;
        for (const auto& [pidx, mu] : distinct_sum(key.first)) {
          if (pole) {
            acc[{pidx, q, false}] += 0.5 * coef.e * mu;
            acc[{pidx, q, true}] += 0.5 * coef.v * mu;
          } else {
            acc[{pidx, q, false}] += coef.v * mu;
          }
        }
      }
    }
  }
  // regroup as r^{2-d} sum_L r^{-2L} [Poly_L(y) + log(r^2) LogPoly_L(y)], y_e = P_e / r^e, y_2 = 1
  std::map<std::tuple<int, bool, std::vector<int>>, double> grouped;
  std::map<std::vector<int>, int> monoIndex{{{}, 0}};
  for (const auto& [key, coef] : acc) {
    std::vector<int> p;
    int degree = 0;
    for (int e : std::get<0>(key)) {
      degree += e;
      if (e != 2) p.push_back(e);
    }
    const int L = std::get<1>(key) - degree / 2;
    if (L < 0) throw NumericError("far-field term of negative order");
    grouped[{L, std::get<2>(key), p}] += coef;
    for (std::size_t k = 1; k <= p.size(); ++k) monoIndex.emplace(std::vector<int>(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(k)), 0);
  }
  // monomials ordered by the lowest order that needs them, then by length, so each one
  // follows its prefix and low orders touch a short prefix of the list
  std::map<std::vector<int>, int> need;
  for (const auto& [key, coef] : grouped) {
    const auto& p = std::get<2>(key);
    for (std::size_t k = 0; k <= p.size(); ++k) {
      std::vector<int> pre(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(k));
      auto it = need.find(pre);
      if (it == need.end())
        need.emplace(pre, std::get<0>(key));
      else
        it->second = std::min(it->second, std::get<0>(key));
    }
  }
  std::vector<std::vector<int>> monos;
  for (const auto& kv : need) monos.push_back(kv.first);
  std::stable_sort(monos.begin(), monos.end(), [&](const auto& u, const auto& v) {
    const int nu = need.at(u), nv = need.at(v);
    return nu != nv ? nu < nv : u.size() < v.size();
  });
  monoParent_.clear();
  monoFactor_.clear();
  farMaxP_ = 0;
  int maxL = 0;
  for (const auto& kv : grouped) maxL = std::max(maxL, std::get<0>(kv.first));
  monoEnd_.assign(static_cast<std::size_t>(maxL) + 1, 1);
  maxPAt_.assign(static_cast<std::size_t>(maxL) + 1, 0);
  for (std::size_t i = 0; i < monos.size(); ++i) {
    monoIndex[monos[i]] = static_cast<int>(i);
    const int nl = need.at(monos[i]);
    for (int L = nl; L <= maxL; ++L) monoEnd_[static_cast<std::size_t>(L)] = i + 1;
    if (i == 0) continue;
    std::vector<int> parent(monos[i].begin(), monos[i].end() - 1);
    monoParent_.push_back(monoIndex.at(parent));
    monoFactor_.push_back(monos[i].back() / 2);
    farMaxP_ = std::max(farMaxP_, monos[i].back());
    for (int L = nl; L <= maxL; ++L)
      maxPAt_[static_cast<std::size_t>(L)] = std::max(maxPAt_[static_cast<std::size_t>(L)], monos[i].back());
  }

  farMaxL_ = 0;
  for (const auto& kv : grouped) farMaxL_ = std::max(farMaxL_, std::get<0>(kv.first));
  for (auto* part : {&farPlain_, &farLog_}) {
    part->coef.clear();
    part->mono.clear();
    part->start.assign(static_cast<std::size_t>(farMaxL_) + 2, 0);
  }
  for (const auto& [key, coef] : grouped) {
    if (coef == 0) continue;
    FarPart& part = std::get<1>(key) ? farLog_ : farPlain_;
    part.coef.push_back(coef);
    part.mono.push_back(monoIndex.at(std::get<2>(key)));
    part.start[static_cast<std::size_t>(std::get<0>(key)) + 1] = part.coef.size();
  }
  for (auto* part : {&farPlain_, &farLog_})
    for (std::size_t L = 1; L < part->start.size(); ++L) part->start[L] = std::max(part->start[L], part->start[L - 1]);

  // per-order bounds on |Poly_L| over directions; coefficient sums cancel heavily, so
  // take the maximum over sampled directions with a safety factor
  farBound_.assign(static_cast<std::size_t>(farMaxL_) + 1, 0.0);
  farBoundLog_.assign(static_cast<std::size_t>(farMaxL_) + 1, 0.0);
  Rng rng(0x9e3779b97f4a7c15ULL);
  std::vector<double> mono(monos.size());
  for (int it = 0; it < 4000 + d_; ++it) {
    std::array<double, kMaxDim> v{};
    if (it < d_) {
      for (int i = 0; i <= it; ++i) v[static_cast<std::size_t>(i)] = 1;
    } else {
      for (int i = 0; i < d_; ++i) v[static_cast<std::size_t>(i)] = it % 2 || rng.uniform() < 0.5 ? rng.normal() : 0.0;
    }
    double r2 = 0;
    for (int i = 0; i < d_; ++i) r2 += v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
    if (r2 == 0) continue;
    std::array<double, kMaxDim> x2{};
    for (int i = 0; i < d_; ++i) x2[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
    far_monomials(x2.data(), 1.0 / r2, mono.data(), farMaxL_);
    for (int L = 0; L <= farMaxL_; ++L) {
      const auto l = static_cast<std::size_t>(L);
      farBound_[l] = std::max(farBound_[l], 4.0 * std::abs(farPlain_.sum(L, mono.data())));
      farBoundLog_[l] = std::max(farBoundLog_[l], 4.0 * std::abs(farLog_.sum(L, mono.data())));
    }
  }
  farLead_ = 0.25 * farBound_[0];

  // r^2 beyond which order L is negligible, then beyond which orders L and L+1 both are
  std::vector<double> thr(static_cast<std::size_t>(farMaxL_) + 1, 0.0);
  for (int L = 1; L <= farMaxL_; ++L) {
    const auto l = static_cast<std::size_t>(L);
    auto small = [&](double r2) {
      return (farBound_[l] + farBoundLog_[l] * std::log(r2)) * std::pow(r2, -L) < farTol_ * farLead_;
    };
    double lo = 1, hi = 2;
    while (!small(hi)) hi *= 2;
    for (int it = 0; it < 200 && hi - lo > 1e-9 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (small(mid) ? hi : lo) = mid;
    }
    thr[l] = hi;
  }
  farDrop_.assign(static_cast<std::size_t>(farMaxL_) + 1, std::numeric_limits<double>::infinity());
  for (int L = 1; L < farMaxL_; ++L)
    farDrop_[static_cast<std::size_t>(L)] = std::max(thr[static_cast<std::size_t>(L)], thr[static_cast<std::size_t>(L) + 1]);
}

double GreenKernel::FarPart::sum(int L, const double* mono) const {
  double s = 0;
  for (std::size_t i = start[static_cast<std::size_t>(L)]; i < start[static_cast<std::size_t>(L) + 1]; ++i) s += coef[i] * mono[mono_index(i)];
  return s;
}

void GreenKernel::far_monomials(const double* x2, double t, double* mono, int Lmax) const {
  std::array<double, 32> y{};
  std::array<double, kMaxDim> pw{};
  for (int i = 0; i < d_; ++i) pw[static_cast<std::size_t>(i)] = x2[i] * t;
  const int maxP = maxPAt_[static_cast<std::size_t>(Lmax)];
  for (int e = 4; e <= maxP; e += 2) {
    double s = 0;
    for (int i = 0; i < d_; ++i) {
      pw[static_cast<std::size_t>(i)] *= x2[i] * t;
      s += pw[static_cast<std::size_t>(i)];
    }
    y[static_cast<std::size_t>(e / 2)] = s;
  }
  mono[0] = 1;
  const std::size_t end = monoEnd_[static_cast<std::size_t>(Lmax)];
  for (std::size_t m = 1; m < end; ++m)
    mono[m] = mono[monoParent_[m - 1]] * y[static_cast<std::size_t>(monoFactor_[m - 1])];
}

double GreenKernel::far_field(const Point& z) const {
  double r2 = 0;
  std::array<double, kMaxDim> x2{};
  for (int i = 0; i < d_; ++i) {
    const double x = static_cast<double>(z.x[i]);
    x2[static_cast<std::size_t>(i)] = x * x;
    r2 += x * x;
  }
  const double t = 1.0 / r2;

  // orders needed: stop once two consecutive order bounds are negligible
  int Lmax = farMaxL_;
  for (int L = 1; L < farMaxL_; ++L)
    if (r2 >= farDrop_[static_cast<std::size_t>(L)]) {
      Lmax = L - 1;
      break;
    }

  std::array<double, 512> mono;
  if (monoParent_.size() + 1 > mono.size()) throw NumericError("far-field monomial buffer too small");
  far_monomials(x2.data(), t, mono.data(), Lmax);
  double s = 0, sl = 0;
  for (int L = Lmax; L >= 0; --L) s = s * t + farPlain_.sum(L, mono.data());
  if (!farLog_.coef.empty()) {
    for (int L = Lmax; L >= 0; --L) sl = sl * t + farLog_.sum(L, mono.data());
    s += sl * std::log(r2);
  }
  double base = 1;
  const double inv = std::sqrt(t);
  for (int i = 0; i < d_ - 2; ++i) base *= inv;
  return base * s;
}

void GreenKernel::evaluate_batch(const std::int64_t* z, std::size_t count, double* out) const {
  constexpr std::size_t B = kBatch;
  const auto d = static_cast<std::size_t>(d_);
  for (std::size_t base = 0; base < count; base += B) {
    const std::size_t m = std::min(B, count - base);
    alignas(64) double x2[kMaxDim][B];
    alignas(64) double t[B];
    std::array<std::size_t, B> farIdx{};
    std::size_t nf = 0;
    double r2min = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) {
      const std::int64_t* zk = z + (base + k) * d;
      std::int64_t mx = 0;
      for (std::size_t i = 0; i < d; ++i) mx = std::max(mx, zk[i] < 0 ? -zk[i] : zk[i]);
      if (mx <= radius_) {
        out[base + k] = (*this)(zk);
        continue;
      }
      double r2 = 0;
      for (std::size_t i = 0; i < d; ++i) {
        const double x = static_cast<double>(zk[i]);
        x2[i][nf] = x * x;
        r2 += x * x;
      }
      t[nf] = 1.0 / r2;
      r2min = std::min(r2min, r2);
      farIdx[nf++] = base + k;
    }
    if (nf == 0) continue;
    for (std::size_t k = nf; k < B; ++k) {
      for (std::size_t i = 0; i < d; ++i) x2[i][k] = 1.0;
      t[k] = 1.0 / static_cast<double>(d);
    }
    int Lmax = farMaxL_;
    for (int L = 1; L < farMaxL_; ++L)
      if (r2min >= farDrop_[static_cast<std::size_t>(L)]) {
        Lmax = L - 1;
        break;
      }
    const int maxP = maxPAt_[static_cast<std::size_t>(Lmax)];
    alignas(64) double y[32][B];
    alignas(64) double pw[kMaxDim][B];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t k = 0; k < B; ++k) pw[i][k] = x2[i][k] * t[k];
    for (int e = 4; e <= maxP; e += 2) {
      double* ye = y[e / 2];
      for (std::size_t k = 0; k < B; ++k) ye[k] = 0;
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < B; ++k) {
          pw[i][k] *= x2[i][k] * t[k];
          ye[k] += pw[i][k];
        }
    }
    const std::size_t nm = monoEnd_[static_cast<std::size_t>(Lmax)];
    thread_local std::vector<double> monoBuf;
    monoBuf.resize(std::max<std::size_t>(monoBuf.size(), (monoParent_.size() + 1) * B));
    double* mono = monoBuf.data();
    for (std::size_t k = 0; k < B; ++k) mono[k] = 1;
    for (std::size_t q = 1; q < nm; ++q) {
      const double* par = mono + static_cast<std::size_t>(monoParent_[q - 1]) * B;
      const double* f = y[monoFactor_[q - 1]];
      double* dst = mono + q * B;
      for (std::size_t k = 0; k < B; ++k) dst[k] = par[k] * f[k];
    }
    auto horner = [&](const FarPart& part, double* acc) {
      for (std::size_t k = 0; k < B; ++k) acc[k] = 0;
      for (int L = Lmax; L >= 0; --L) {
        for (std::size_t k = 0; k < B; ++k) acc[k] *= t[k];
        for (std::size_t i = part.start[static_cast<std::size_t>(L)]; i < part.start[static_cast<std::size_t>(L) + 1]; ++i) {
          const double c = part.coef[i];
          const double* mv = mono + part.mono_index(i) * B;
          for (std::size_t k = 0; k < B; ++k) acc[k] += c * mv[k];
        }
      }
    };
    alignas(64) double s[B];
    horner(farPlain_, s);
    if (!farLog_.coef.empty()) {
      alignas(64) double sl[B];
      horner(farLog_, sl);
      for (std::size_t k = 0; k < B; ++k) s[k] -= sl[k] * std::log(t[k]);
    }
    for (std::size_t k = 0; k < nf; ++k) {
      double b = (d_ % 2) ? std::sqrt(t[k]) : 1.0;
      for (int i = 0; i < (d_ - 2) / 2; ++i) b *= t[k];
      out[farIdx[k]] = b * s[k];
    }
  }
}

double GreenKernel::operator()(const std::int64_t* z) const {
  std::array<std::int64_t, kMaxDim> a;
  std::int64_t mx = 0;
  for (int i = 0; i < d_; ++i) {
    a[i] = z[i] < 0 ? -z[i] : z[i];
    mx = std::max(mx, a[i]);
  }
  if (mx > radius_) {
    Point p(d_);
    for (int i = 0; i < d_; ++i) p.x[i] = a[i];
    return far_field(p);
  }
  for (int i = 1; i < d_; ++i) {
    const std::int64_t v = a[i];
    int j = i - 1;
    while (j >= 0 && a[j] < v) {
      a[j + 1] = a[j];
      --j;
    }
    a[j + 1] = v;
  }
  return table_[rank(a.data())];
}

double GreenKernel::operator()(const Point& z) const { return (*this)(z.x.data()); }

const GreenKernel& shared_kernel(int d) {
  static std::array<std::unique_ptr<GreenKernel>, kMaxDim + 1> kernels;
  static std::array<std::once_flag, kMaxDim + 1> flags;
  if (d < 3 || d > kMaxDim) throw UsageError("Green kernel needs 3 <= d <= 8");
  std::call_once(flags[static_cast<std::size_t>(d)],
                 [d] { kernels[static_cast<std::size_t>(d)] = std::make_unique<GreenKernel>(d); });
  return *kernels[static_cast<std::size_t>(d)];
}

std::vector<Point> canonical_l1_ball(int d, std::int64_t maxL1) {
  std::vector<Point> out;
  Point p(d);
  std::function<void(int, std::int64_t, std::int64_t)> rec = [&](int i, std::int64_t cap, std::int64_t left) {
    if (i == d) {
      out.push_back(p);
      return;
    }
    for (std::int64_t v = 0; v <= std::min(cap, left); ++v) {
      p.x[static_cast<std::size_t>(i)] = v;
      rec(i + 1, v, left - v);
    }
    p.x[static_cast<std::size_t>(i)] = 0;
  };
  rec(0, maxL1, maxL1);
  return out;
}

std::vector<Point> canonical_ball(int d, double radius) {
  std::vector<Point> out;
  Point p(d);
  const double r2 = radius * radius;
  std::function<void(int, std::int64_t, double)> rec = [&](int i, std::int64_t cap, double left) {
    if (i == d) {
      out.push_back(p);
      return;
    }
    for (std::int64_t v = 0; v <= cap && static_cast<double>(v * v) <= left + 1e-9; ++v) {
      p.x[static_cast<std::size_t>(i)] = v;
      rec(i + 1, v, left - static_cast<double>(v * v));
    }
    p.x[static_cast<std::size_t>(i)] = 0;
  };
  rec(0, static_cast<std::int64_t>(std::floor(radius)), r2);
  return out;
}

std::size_t orbit_size(const Point& c) {
  const int d = c.d;
  std::size_t nz = 0;
  double perms = factorial(d);
  int i = 0;
  while (i < d) {
    int j = i;
    while (j < d && c.x[j] == c.x[i]) ++j;
    perms /= factorial(j - i);
    if (c.x[i] != 0) nz += static_cast<std::size_t>(j - i);
    i = j;
  }
  return static_cast<std::size_t>(std::llround(perms)) << nz;
}

TruncatedGreenTable TruncatedGreenTable::dynamic_programming(int d, std::size_t T) {
  if (T > 400) throw UsageError("TruncatedGreenTable: T too large for dynamic programming, use Monte Carlo mode");
  TruncatedGreenTable t;
  t.d_ = d;
  t.T_ = T;
  t.method_ = TruncatedMethod::DynamicProgramming;
  for (const auto& z : canonical_l1_ball(d, static_cast<std::int64_t>(T))) {
    const auto p = transition_probabilities(z, T);
    double s = 0;
    for (double v : p) s += v;
    t.table_[z] = s;
  }
  return t;
}

TruncatedGreenTable TruncatedGreenTable::monte_carlo(int d, std::size_t T, std::size_t walks, std::uint64_t seed) {
  if (walks == 0) throw UsageError("monte_carlo table needs walks > 0");
  TruncatedGreenTable t;
  t.d_ = d;
  t.T_ = T;
  t.method_ = TruncatedMethod::MonteCarlo;
  std::unordered_map<Point, double, PointHash> counts;
  for (std::size_t w = 0; w < walks; ++w) {
    Rng rng(seed, w);
    const Walk walk = simulate_from(Point::origin(d), T, rng);
    for (const auto& p : walk.steps) counts[p.canonical()] += 1.0;
  }
  for (const auto& [z, c] : counts)
    t.table_[z] = c / (static_cast<double>(walks) * static_cast<double>(orbit_size(z)));
  return t;
}

double TruncatedGreenTable::operator()(const Point& z) const {
  if (static_cast<std::size_t>(z.l1()) > T_) return 0.0;
  auto it = table_.find(z.canonical());
  return it == table_.end() ? 0.0 : it->second;
}

PhiTable::PhiTable(const GreenKernel& kernel, std::size_t T, PhiRange range)
    : kernel_(&kernel), T_(T), range_(range) {
  if (T < 1) throw UsageError("phi_T needs T >= 1");
  if (T > 400) throw UsageError("phi_T table: T too large for dynamic programming");
  gFactor_ = static_cast<double>(range == PhiRange::ZeroToT ? T + 1 : T);
  for (const auto& z : canonical_l1_ball(kernel.d(), static_cast<std::int64_t>(T) - 1)) {
    const auto p = transition_probabilities(z, T - 1);
    double s = 0;
    for (std::size_t j = 0; j < T; ++j) s += static_cast<double>(T - j) * p[j];
    weighted_[z] = s;
  }
}

double PhiTable::operator()(const Point& z) const {
  const double g = (*kernel_)(z);
  double w = 0;
  if (static_cast<std::size_t>(z.l1()) < T_) {
    auto it = weighted_.find(z.canonical());
    if (it != weighted_.end()) w = it->second;
  }
  return (gFactor_ * g - w) / static_cast<double>(T_);
}

double phi_T(const Point& x, std::size_t T, PhiRange range) {
  if (T < 1) throw UsageError("phi_T needs T >= 1");
  double w = 0;
  if (static_cast<std::size_t>(x.l1()) < T) {
    const auto p = transition_probabilities(x, T - 1);
    for (std::size_t j = 0; j < T; ++j) w += static_cast<double>(T - j) * p[j];
  }
  const double g = green(x);
  const double f = static_cast<double>(range == PhiRange::ZeroToT ? T + 1 : T);
  return (f * g - w) / static_cast<double>(T);
}

double phi_T_convolution(const Point& x, std::size_t T, const GreenKernel& kernel, PhiRange range) {
  const int d = x.d;
  std::unordered_map<Point, double, PointHash> gt;
  double s = 0;
  // enumerate y with |y|_1 <= T
  Point y(d);
  std::function<void(int, std::int64_t)> rec = [&](int i, std::int64_t left) {
    if (i == d) {
      const Point c = y.canonical();
      auto it = gt.find(c);
      if (it == gt.end()) it = gt.emplace(c, green_truncated(c, T)).first;
      s += kernel(x - y) * it->second;
      return;
    }
    for (std::int64_t v = -left; v <= left; ++v) {
      y.x[static_cast<std::size_t>(i)] = v;
      rec(i + 1, left - (v < 0 ? -v : v));
    }
    y.x[static_cast<std::size_t>(i)] = 0;
  };
  rec(0, static_cast<std::int64_t>(T));
  if (range == PhiRange::OneToT) s -= kernel(x);
  return s / static_cast<double>(T);
}

GreenBounds fit_green_bounds(const GreenKernel& kernel, double radius) {
  GreenBounds b{std::numeric_limits<double>::infinity(), 0};
  const int d = kernel.d();
  for (const auto& x : canonical_ball(d, radius)) {
    const double r = x.norm();
    const double v = kernel(x) * (std::pow(r, d - 2) + 1.0);
    b.c = std::min(b.c, v);
    b.C = std::max(b.C, v);
  }
  return b;
}

}  // namespace walkcap
