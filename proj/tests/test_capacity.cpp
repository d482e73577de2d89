#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "walkcap/capacity.hpp"
#include "walkcap/errors.hpp"
#include "walkcap/green.hpp"
#include "walkcap/lattice.hpp"

using namespace walkcap;

namespace {

// independent dense solve of the last-exit system with Eigen's LDLT
double eigen_capacity(const PointSet& A) {
  const auto n = static_cast<Eigen::Index>(A.size());
  Eigen::MatrixXd G(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      G(i, j) = green_quadrature(A[static_cast<std::size_t>(i)] - A[static_cast<std::size_t>(j)], 1e-13).value;
  return G.ldlt().solve(Eigen::VectorXd::Ones(n)).sum();
}

PointSet random_set(std::uint64_t seed, std::size_t size, std::int64_t box, int d = 5) {
  Rng rng(seed);
  PointSet s(d);
  while (s.size() < size) {
    Point p(d);
    for (int i = 0; i < d; ++i) p[i] = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(2 * box + 1))) - box;
    s.insert(p);
  }
  return s;
}

}  // namespace

TEST_CASE("singleton and edge capacities") {
  const Point o = Point::origin(5), e1 = Point::unit(5, 0);
  const double g0 = green_quadrature(o).value, g1 = green_quadrature(e1).value;
  const auto sol = equilibrium(PointSet(5, {Point(5, {3, -2, 7, 0, 1})}));
  CHECK(std::abs(sol.cap - 1 / g0) < 1e-9);
  CHECK(std::abs(sol.eq[0] - 1 / g0) < 1e-9);
  CHECK(std::abs(capacity(PointSet(5, {o, e1})) - 2 / (g0 + g1)) < 1e-9);
  CHECK(capacity(PointSet(5)) == 0);
}

TEST_CASE("capacity matches an independent dense solve") {
  for (std::uint64_t s = 0; s < 6; ++s) {
    const PointSet A = random_set(s, 10 + 5 * s, 4);
    CHECK(capacity(A) == doctest::Approx(eigen_capacity(A)).epsilon(1e-10));
  }
  const Walk w = simulate_walk(60, 3, 5);
  const PointSet R = range_of(w, 0, 60);
  CHECK(capacity(R) == doctest::Approx(eigen_capacity(R)).epsilon(1e-10));
}

TEST_CASE("equilibrium measure invariants") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const PointSet A = s % 2 ? random_set(s, 64, 3) : range_of(simulate_walk(63, s, 5), 0, 63);
    const auto sol = equilibrium(A);
    double sum = 0;
    for (double e : sol.eq) {
      CHECK(e >= -1e-12);
      CHECK(e <= 1 + 1e-12);
      sum += e;
    }
    CHECK(sum == doctest::Approx(sol.cap).epsilon(1e-13));
    CHECK(sol.cap > 0);
    CHECK(sol.cap <= static_cast<double>(A.size()) + 1e-8);
    CHECK(equilibrium_residual(sol) < 1e-9);
  }
}

TEST_CASE("monotone, subadditive and translation invariant") {
  for (std::uint64_t s = 0; s < 12; ++s) {
    const PointSet A = random_set(100 + s, 24, 3), B = random_set(200 + s, 24, 3);
    const PointSet U = set_union(A, B), I = set_intersection(A, B);
    const double cA = capacity(A), cB = capacity(B), cU = capacity(U);
    const double cI = I.empty() ? 0.0 : capacity(I);
    CHECK(cA <= cU + 1e-8);
    CHECK(cB <= cU + 1e-8);
    CHECK(cU <= cA + cB - cI + 1e-8);
    CHECK(capacity(A.translated(Point(5, {17, -4, 9, 0, 2}))) == doctest::Approx(cA).epsilon(1e-12));
  }
}

TEST_CASE("extend agrees with a full solve") {
  const Point o = Point::origin(5), e1 = Point::unit(5, 0);
  const auto two = extend(equilibrium(PointSet(5, {o})), e1);
  CHECK(two.cap == doctest::Approx(capacity(PointSet(5, {o, e1}))).epsilon(1e-12));
  CHECK_THROWS_AS(extend(two, o), UsageError);
}

TEST_CASE("chain of 200 extensions matches the one-shot solve") {
  const Walk w = simulate_walk(400, 8, 5);
  const PointSet R = range_of(w, 0, 400);
  REQUIRE(R.size() >= 200);
  std::vector<Point> first(R.points().begin(), R.points().begin() + 200);
  auto sol = equilibrium(PointSet(5, {first[0]}));
  for (std::size_t i = 1; i < 200; ++i) extend_in_place(sol, first[i]);
  const double one = capacity(PointSet(5, first));
  CHECK(std::abs(sol.cap - one) / one < 1e-6);
  CHECK(equilibrium_residual(sol) < 1e-9);
}

TEST_CASE("prefix capacities and truncation") {
  const Walk w = simulate_walk(150, 21, 5);
  const PointSet R = range_of(w, 0, 150);
  const auto caps = prefix_capacities(R.points());
  REQUIRE(caps.size() == R.size());
  for (std::size_t k : {1u, 2u, 10u, 57u}) {
    std::vector<Point> pre(R.points().begin(), R.points().begin() + static_cast<std::ptrdiff_t>(k));
    CHECK(caps[k - 1] == doctest::Approx(capacity(PointSet(5, pre))).epsilon(1e-10));
  }
  auto sol = equilibrium(R);
  truncate_in_place(sol, 57);
  CHECK(sol.cap == doctest::Approx(caps[56]).epsilon(1e-10));
  CHECK(equilibrium_residual(sol) < 1e-9);
}

TEST_CASE("capacity_with leaves the base untouched") {
  const Walk w = simulate_walk(120, 4, 5);
  const PointSet A = range_of(w, 0, 60);
  const PointSet B = range_of(w, 50, 120);
  const auto base = equilibrium(A);
  const double before = base.cap;
  const double joint = capacity_with(base, B.points());
  CHECK(joint == doctest::Approx(capacity(set_union(A, B))).epsilon(1e-10));
  CHECK(base.cap == before);
  CHECK(base.set.size() == A.size());
}

TEST_CASE("cube capacity by symmetry reduction") {
  for (std::int64_t r : {3, 5}) {
    PointSet boundary(5);
    for (const auto& p : cube_set(Point::origin(5), r))
      if (p.linf() == (r - 1) / 2) boundary.insert(p);
    CHECK(cube_capacity(5, r) == doctest::Approx(capacity(boundary)).epsilon(1e-10));
  }
  // the full cube and its inner boundary have the same capacity
  CHECK(capacity(cube_set(Point::origin(5), 3)) == doctest::Approx(cube_capacity(5, 3)).epsilon(1e-10));
  CHECK(cube_capacity(5, 1) == doctest::Approx(1 / shared_kernel(5).origin()));
  CHECK_THROWS(cube_capacity(5, 4));
}

TEST_CASE("cube capacity grows like r^{d-2}") {
  const std::vector<double> r = {3, 5, 7, 9, 11};
  std::vector<double> slopes;
  double prev = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double c = cube_capacity(5, static_cast<std::int64_t>(r[i]));
    if (i) slopes.push_back(std::log(c / prev) / std::log(r[i] / r[i - 1]));
    prev = c;
  }
  for (std::size_t i = 1; i < slopes.size(); ++i) CHECK(slopes[i] < slopes[i - 1]);
  CHECK(slopes.back() >= 5 - 2.3);
  CHECK(slopes.back() <= 5 - 1.7);
}

TEST_CASE("escape-weighted sums grow at most like r^2") {
  // sum_x e_L(x) / (|x|^{d-4} + 1) over sets L inside Q(r)
  std::vector<double> rs, sums;
  for (std::int64_t r : {4, 8, 16, 32}) {
    double worst = 0;
    for (std::uint64_t s = 0; s < 3; ++s) {
      PointSet L(5);
      const std::size_t target = std::min<std::size_t>(1500, static_cast<std::size_t>(std::pow(r, 5)) / 2);
      Rng rng(derive_seed(r, s));
      while (L.size() < target) {
        Point p(5);
        for (int i = 0; i < 5; ++i) p[i] = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(r))) + cube_low_offset(r);
        L.insert(p);
      }
      const auto sol = equilibrium(L);
      double sum = 0;
      for (std::size_t i = 0; i < L.size(); ++i) sum += sol.eq[i] / (L[i].norm() + 1);
      worst = std::max(worst, sum);
    }
    rs.push_back(std::log(static_cast<double>(r)));
    sums.push_back(std::log(worst));
  }
  const double slope = (sums.back() - sums.front()) / (rs.back() - rs.front());
  CHECK(slope <= 2.2);
}

TEST_CASE("Monte Carlo escape estimator") {
  const Point o = Point::origin(5), e1 = Point::unit(5, 0);
  const PointSet one(5, {o}), two(5, {o, e1});
  for (const PointSet* A : {&one, &two}) {
    const double exact = capacity(*A);
    const auto mc = capacity_mc(*A, 4000, 16, 99);
    CHECK(mc.stdError > 0);
    CHECK(mc.estimate - exact <= 3 * mc.stdError + mc.biasBound);
    CHECK(exact - mc.estimate <= 3 * mc.stdError);
    const auto far = capacity_mc(*A, 4000, 32, 100);
    const double noise = 3 * std::hypot(mc.stdError, far.stdError);
    CHECK(std::abs(far.estimate - mc.estimate) <= mc.biasBound + noise);
  }
  CHECK_THROWS(capacity_mc(one, 0, 16, 1));
}
