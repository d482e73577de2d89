#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "walkcap/lattice.hpp"

namespace walkcap {

struct QuadratureResult {
  double value = 0;
  double abserr = 0;
  std::size_t evaluations = 0;
};

// G(x) = int_0^inf prod_i e^{-t/d} I_{|x_i|}(t/d) dt
QuadratureResult green_quadrature(const Point& x, double relTol = 1e-12);
// (G*G)(x) = int_0^inf t prod_i e^{-t/d} I_{|x_i|}(t/d) dt = sum_n (n+1) p_n(x)
QuadratureResult green_star_green_quadrature(const Point& x, double relTol = 1e-10);

// p_0(x) .. p_N(x), exact up to rounding
std::vector<double> transition_probabilities(const Point& x, std::size_t N);
double green_truncated(const Point& x, std::size_t T);

struct GreenDpEstimate {
  double partial = 0;  // sum_{n<=N} p_n(x)
  double tail = 0;     // local CLT estimate of sum_{n>N} p_n(x)
  double value = 0;
  double fitB = 0;     // second-order coefficient fitted on the last DP term
  std::size_t N = 0;
};
GreenDpEstimate green_dp(const Point& x, std::size_t N);

// local CLT estimate of sum_{n>N} p_n(x): Gaussian term with its exact 1/n correction
// plus a fitted c2/n^2 term
double lclt_tail(const Point& x, std::size_t N, double c2);

struct ReturnEstimate {
  double pReturn = 0;
  double partial = 0;
  double tail = 0;
};
// first-return probabilities by renewal from p_n(0), plus a tail term
ReturnEstimate return_probability_dp(int d, std::size_t N);

class GreenCache {
 public:
  explicit GreenCache(int d, double precisionTarget = 1e-10);

  double operator()(const Point& x);
  double green(const Point& x) { return (*this)(x); }
  QuadratureResult evaluate(const Point& x) const;

  int d() const { return d_; }
  double precision_target() const { return precision_; }
  std::size_t size() const;
  bool contains(const Point& x) const;

  void save(const std::string& path) const;
  // throws NumericError if a loaded value fails the harmonicity check
  std::size_t load(const std::string& path, double tolerance = 1e-9);
  double harmonic_residual(const Point& x);

 private:
  int d_;
  double precision_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<Point, double, PointHash> values_;
};

GreenCache& shared_green_cache(int d);
double green(const Point& x);

// Fast lookup used when assembling Green matrices: fixed-node quadrature on
// canonical points with max coordinate <= nearRadius, asymptotic expansion
// beyond.
class GreenKernel {
 public:
  // farTolerance: relative size below which high orders of the expansion are dropped
  explicit GreenKernel(int d, int nearRadius = -1, int farOrder = -1, double farTolerance = 1e-10);

  double operator()(const Point& z) const;
  double operator()(const std::int64_t* z) const;
  double far_field(const Point& z) const;
  // z holds count displacements of d coordinates each
  void evaluate_batch(const std::int64_t* z, std::size_t count, double* out) const;
  static constexpr std::size_t kBatch = 16;
  double origin() const { return table_[0]; }
  int d() const { return d_; }
  int near_radius() const { return radius_; }
  std::size_t table_size() const { return table_.size(); }

  std::size_t far_terms() const { return farPlain_.coef.size() + farLog_.coef.size(); }
  int far_order() const { return farOrder_; }

  static int default_near_radius(int d);
  static int default_far_order(int d);
  const std::vector<double>& far_bounds() const { return farBound_; }

 private:
  // terms coef * r^{2-d} * r^{-2L} * monomial in y_e = P_e / r^e, P_e = sum_i x_i^e
  struct FarPart {
    std::vector<double> coef;
    std::vector<int> mono;
    std::vector<std::size_t> start;  // terms of order L are [start[L], start[L+1])
    std::size_t mono_index(std::size_t i) const { return static_cast<std::size_t>(mono[i]); }
    double sum(int L, const double* monomials) const;
  };

  void far_monomials(const double* x2, double t, double* mono, int Lmax) const;
  std::size_t rank(std::int64_t* a) const;
  void build_table();
  void build_far_terms();

  int d_;
  int radius_;
  std::vector<double> table_;
  std::vector<std::vector<std::uint64_t>> binom_;
  FarPart farPlain_, farLog_;  // the second is multiplied by log r^2
  std::vector<int> monoParent_, monoFactor_;
  std::vector<std::size_t> monoEnd_;  // monomials needed up to order L
  std::vector<int> maxPAt_;
  int farOrder_;
  double farTol_;
  int farMaxL_ = 0;
  int farMaxP_ = 0;
  std::vector<double> farBound_, farBoundLog_;
  double farLead_ = 0;
  std::vector<double> farDrop_;  // orders >= L are dropped when r^2 >= farDrop_[L]
};

const GreenKernel& shared_kernel(int d);

enum class TruncatedMethod { DynamicProgramming, MonteCarlo };

class TruncatedGreenTable {
 public:
  static TruncatedGreenTable dynamic_programming(int d, std::size_t T);
  static TruncatedGreenTable monte_carlo(int d, std::size_t T, std::size_t walks, std::uint64_t seed);

  double operator()(const Point& z) const;
  std::size_t T() const { return T_; }
  int d() const { return d_; }
  TruncatedMethod method() const { return method_; }
  const std::unordered_map<Point, double, PointHash>& values() const { return table_; }

 private:
  int d_ = 5;
  std::size_t T_ = 0;
  TruncatedMethod method_ = TruncatedMethod::DynamicProgramming;
  std::unordered_map<Point, double, PointHash> table_;
};

// canonical points (descending absolute coordinates) with |z|_1 <= maxL1
std::vector<Point> canonical_l1_ball(int d, std::int64_t maxL1);
// canonical points with Euclidean norm <= radius
std::vector<Point> canonical_ball(int d, double radius);
// number of lattice points in the symmetry orbit of a canonical point
std::size_t orbit_size(const Point& canonical);

enum class PhiRange { ZeroToT, OneToT };

// phi_T(z) = (1/T) sum_k E[G(z - S_k)] = (1/T)[(T+1)G(z) - sum_{j<T}(T-j) p_j(z)]
// using harmonicity of G off the origin
class PhiTable {
 public:
  PhiTable(const GreenKernel& kernel, std::size_t T, PhiRange range = PhiRange::ZeroToT);

  double operator()(const Point& z) const;
  std::size_t T() const { return T_; }
  PhiRange range() const { return range_; }

 private:
  const GreenKernel* kernel_;
  std::size_t T_;
  PhiRange range_;
  double gFactor_;
  std::unordered_map<Point, double, PointHash> weighted_;
};

double phi_T(const Point& x, std::size_t T, PhiRange range = PhiRange::ZeroToT);
// oracle: (1/T) sum_y G(x - y) G_T(y) by direct convolution
double phi_T_convolution(const Point& x, std::size_t T, const GreenKernel& kernel, PhiRange range = PhiRange::ZeroToT);

struct GreenBounds {
  double c = 0;
  double C = 0;
};
GreenBounds fit_green_bounds(const GreenKernel& kernel, double radius = 50);

}  // namespace walkcap
