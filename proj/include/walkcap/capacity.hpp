#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "walkcap/green.hpp"
#include "walkcap/lattice.hpp"

namespace walkcap {

// Lower Cholesky factor stored as packed rows, so that bordering (appending a
// row) costs O(n^2) and truncating to a leading block is free.
class GrowingCholesky {
 public:
  GrowingCholesky() = default;

  std::size_t size() const { return n_; }
  const double* row(std::size_t i) const { return data_.data() + i * (i + 1) / 2; }
  double diag(std::size_t i) const { return row(i)[i]; }

  // g: the n off-diagonal entries of the new Green-matrix row, g0 its diagonal.
  // Returns false and leaves the factor unchanged if the new pivot is not positive.
  bool append(const double* g, double g0, double minPivot = 1e-12);
  void truncate(std::size_t n);
  void reserve(std::size_t n) { data_.reserve(n * (n + 1) / 2); }

  void forward(double* v) const;   // v <- L^{-1} v
  void backward(double* v) const;  // v <- L^{-T} v
  // same on the leading m x m block
  void backward(double* v, std::size_t m) const;
  // crude condition estimate (max pivot / min pivot)^2
  double condition_estimate() const;

  static GrowingCholesky from_lower(const double* colMajor, std::size_t n);

 private:
  std::vector<double> data_;
  std::size_t n_ = 0;
};

struct EquilibriumSolution {
  PointSet set;
  std::vector<double> eq;  // e_A in insertion order of `set`
  std::vector<double> y;   // L^{-1} 1; Cap of the first k points is sum_{i<k} y_i^2
  double cap = 0;
  double residual = -1;    // max_x |sum_y G(x-y) e(y) - 1|; negative when unchecked
  std::shared_ptr<GrowingCholesky> factor;
  std::size_t refactorizations = 0;

  double e(const Point& x) const;
};

struct SolverOptions {
  std::size_t maxSize = 8192;
  double residualTolerance = 1e-9;
};

EquilibriumSolution equilibrium(const PointSet& A, const SolverOptions& opt = {});
double capacity(const PointSet& A, const SolverOptions& opt = {});

// Cap of every prefix of `pts` (points must be distinct); one factorization.
std::vector<double> prefix_capacities(const std::vector<Point>& pts, const SolverOptions& opt = {});

EquilibriumSolution extend(const EquilibriumSolution& sol, const Point& p);
// in place; the equilibrium measure is refreshed only when updateMeasure is set
void extend_in_place(EquilibriumSolution& sol, const Point& p, bool updateMeasure = true);
// drops every point after the first n; the factor prefix stays valid
void truncate_in_place(EquilibriumSolution& sol, std::size_t n, bool updateMeasure = true);
void refresh_measure(EquilibriumSolution& sol);
double equilibrium_residual(const EquilibriumSolution& sol);

// Cap(base.set ∪ extra) from the factor of base, which is left untouched;
// points of extra already present are skipped
double capacity_with(const EquilibriumSolution& base, const std::vector<Point>& extra);

// Cap(Q(0, r)) for odd r; the equilibrium measure lives on the inner boundary and
// is constant on symmetry orbits, so the solve has one unknown per orbit
double cube_capacity(int d, std::int64_t r);

// Green matrix [G(x_i - x_j)], full symmetric
std::vector<double> green_matrix(const std::vector<Point>& pts, const GreenKernel& kernel);

struct McCapacity {
  double estimate = 0;
  double stdError = 0;
  double biasBound = 0;  // estimate - true capacity lies in [0, biasBound] up to noise
  std::size_t walks = 0;
  double escapeRadius = 0;
};

// Sum over x in A of P_x(exit the ball of escapeRadius around the bbox center before
// returning to A), `walks` walks per point.
McCapacity capacity_mc(const PointSet& A, std::size_t walks, double escapeRadius, std::uint64_t seed);

}  // namespace walkcap
