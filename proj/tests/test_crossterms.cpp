#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "walkcap/capacity.hpp"
#include "walkcap/crossterms.hpp"
#include "walkcap/green.hpp"
#include "walkcap/lattice.hpp"

using namespace walkcap;

namespace {

Eigen::VectorXd eq_measure(const std::vector<Point>& pts) {
  const GreenKernel& K = shared_kernel(pts.front().d);
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd G(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) G(i, j) = K(pts[static_cast<std::size_t>(i)] - pts[static_cast<std::size_t>(j)]);
  return G.ldlt().solve(Eigen::VectorXd::Ones(n));
}

struct Direct {
  double chiAB, chiBA, chiTilde, chiBar, gamma, chiZero;
};

// every functional straight from its double-sum definition
Direct direct(const PointSet& A, const PointSet& B) {
  const GreenKernel& K = shared_kernel(A.d());
  const PointSet U = set_union(A, B);
  const auto eU = eq_measure(U.points()), eA = eq_measure(A.points()), eB = eq_measure(B.points());
  auto eu = [&](const Point& p) { return eU(static_cast<Eigen::Index>(*U.index_of(p))); };
  Direct r{};
  for (std::size_t i = 0; i < A.size(); ++i)
    for (std::size_t j = 0; j < B.size(); ++j) {
      const double g = K(A[i] - B[j]);
      const double ea = eA(static_cast<Eigen::Index>(i)), eb = eB(static_cast<Eigen::Index>(j));
      r.chiAB += eu(A[i]) * g * eb;
      r.chiBA += eu(B[j]) * g * ea;
      r.chiTilde += ea * g * eb;
      r.chiBar += ea * g;
      r.gamma += g * eb;
      if (!B.contains(A[i])) r.chiZero += eu(A[i]) * g * eb;
    }
  return r;
}

std::pair<PointSet, PointSet> random_pair(std::uint64_t seed, std::size_t maxSize) {
  Rng rng(seed);
  const std::size_t n = 20 + rng.below(2 * maxSize);
  const Walk w = simulate_walk(n, derive_seed(seed, 1), 5);
  const std::size_t a = rng.below(n / 2 + 1), b = n / 2 + rng.below(n / 2);
  PointSet A = range_of(w, 0, std::min(a + maxSize / 2, n)), B = range_of(w, std::min(b, n), n);
  auto shrink = [&](PointSet s) {
    if (s.size() <= maxSize) return s;
    return PointSet(5, std::vector<Point>(s.points().begin(), s.points().begin() + static_cast<std::ptrdiff_t>(maxSize)));
  };
  return {shrink(A), shrink(B)};
}

}  // namespace

TEST_CASE("chi_C of a set with itself is its capacity") {
  const PointSet A = range_of(simulate_walk(50, 1, 5), 0, 50);
  CHECK(chi_C(A, A) == doctest::Approx(capacity(A)).epsilon(1e-12));
}

TEST_CASE("chi_C decreases with separation") {
  const PointSet A = range_of(simulate_walk(30, 2, 5), 0, 30);
  const PointSet B0 = range_of(simulate_walk(30, 3, 5), 0, 30);
  double prev = 1e300;
  for (std::int64_t D : {10, 20, 40}) {
    const double c = chi_C(A, B0.translated(Point(5, {D, 0, 0, 0, 0})));
    CHECK(c > 0);
    CHECK(c < prev);
    prev = c;
  }
}

TEST_CASE("report matches the double-sum definitions") {
  for (std::uint64_t s = 0; s < 8; ++s) {
    const auto [A, B] = random_pair(s, 40);
    const auto rep = chi_variants(A, B);
    const Direct ref = direct(A, B);
    CHECK(rep.chiAB == doctest::Approx(ref.chiAB).epsilon(1e-9));
    CHECK(rep.chiBA == doctest::Approx(ref.chiBA).epsilon(1e-9));
    CHECK(rep.chiTilde == doctest::Approx(ref.chiTilde).epsilon(1e-9));
    CHECK(rep.chiBar == doctest::Approx(ref.chiBar).epsilon(1e-9));
    CHECK(rep.gammaAB == doctest::Approx(ref.gamma).epsilon(1e-9));
    CHECK(rep.chiZero == doctest::Approx(ref.chiZero).epsilon(1e-9));
    CHECK(chi(A, B) == doctest::Approx(ref.chiAB).epsilon(1e-9));
    CHECK(gamma_cross(A, B) == doctest::Approx(ref.gamma).epsilon(1e-9));
  }
}

TEST_CASE("report invariants on random pairs") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto [A, B] = random_pair(1000 + s, 32);
    const auto r = chi_variants(A, B);
    CHECK(std::abs(r.chiC - (r.capA + r.capB - r.capUnion)) < 1e-12);
    CHECK(std::abs(r.chiC - chi_C(A, B)) < 1e-8);
    CHECK(r.chiC >= -1e-8);
    CHECK(r.chiC <= std::min(r.capA, r.capB) + 1e-8);
    CHECK(r.epsilon >= -1e-8);
    CHECK(r.epsilon <= r.capIntersection + 1e-8);
    CHECK(r.chiC <= 2 * r.gammaAB + 1e-8);
    CHECK(r.chiAB <= r.chiTilde + 1e-10);
    CHECK(r.chiTilde <= r.chiBar + 1e-10);
    CHECK(r.capUnion <= r.capA + r.capB - r.chiZero + 1e-8);
  }
}

TEST_CASE("disjoint sets split chi_C exactly") {
  const PointSet A = range_of(simulate_walk(40, 5, 5), 0, 40);
  const PointSet B = range_of(simulate_walk(40, 6, 5), 0, 40).translated(Point(5, {3, 2, 0, 0, 0}));
  REQUIRE(set_intersection(A, B).empty());
  CHECK(std::abs(chi(A, B) + chi(B, A) - chi_C(A, B)) < 1e-8);
}

TEST_CASE("two single points in closed form") {
  const GreenKernel& K = shared_kernel(5);
  for (const Point& x : {Point(5, {1, 0, 0, 0, 0}), Point(5, {2, 1, 0, 0, 0}), Point(5, {5, 0, 3, 0, 0})}) {
    const double g0 = K.origin(), gx = K(x);
    const double want = (1 / (g0 + gx)) * gx * (1 / g0);
    CHECK(chi(PointSet(5, {Point::origin(5)}), PointSet(5, {x})) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("chiTilde is symmetric") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto [A, B] = random_pair(50 + s, 30);
    CHECK(chi_variants(A, B).chiTilde == doctest::Approx(chi_variants(B, A).chiTilde).epsilon(1e-10));
  }
}

TEST_CASE("gamma is increasing in both arguments") {
  const Walk w = simulate_walk(120, 9, 5);
  const PointSet A1 = range_of(w, 0, 30), A2 = range_of(w, 0, 50);
  const PointSet B1 = range_of(w, 70, 90), B2 = range_of(w, 60, 120);
  CHECK(gamma_cross(A1, B1) <= gamma_cross(A2, B1) + 1e-12);
  CHECK(gamma_cross(A1, B1) <= gamma_cross(A1, B2) + 1e-12);
}

TEST_CASE("epsilon on identical sets") {
  const PointSet A = range_of(simulate_walk(40, 12, 5), 0, 40);
  const auto r = chi_variants(A, A);
  CHECK(r.epsilon == doctest::Approx(r.chiAB + r.chiBA - r.capA).epsilon(1e-12));
  CHECK(r.chiC == doctest::Approx(r.capA).epsilon(1e-12));
}

TEST_CASE("one level splits into halves") {
  const Walk w = simulate_walk(101, 77, 5);
  const auto rec = dyadic_decompose(w, 1);
  const PointSet L = range_of(w, 0, 50), R = range_of(w, 50, 101);
  const double want = capacity(L) + capacity(R) - chi_C(L, R);
  CHECK(rec.capTotal == doctest::Approx(want).epsilon(1e-10));
  CHECK(std::abs(rec.residual) < 1e-8);
}

TEST_CASE("dyadic identity with three levels") {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto rec = dyadic_decompose(simulate_walk(256, s, 5), 3);
    CHECK(std::abs(rec.residual) < 1e-6);
    for (auto len : rec.piece_lengths()) CHECK(std::abs(static_cast<double>(len) - 256.0 / 8) <= 1);
  }
  const auto odd = dyadic_decompose(simulate_walk(203, 5, 5), 3);
  CHECK(std::abs(odd.residual) < 1e-6);
  for (auto len : odd.piece_lengths()) CHECK(std::abs(static_cast<double>(len) - 203.0 / 8) <= 1);
  CHECK_THROWS(dyadic_decompose(simulate_walk(6, 1, 5), 3));
}

TEST_CASE("cross term tail decays faster than exponential in t^{1-2/(d-2)}") {
  const int d = 7;
  const std::size_t m = 500;
  std::vector<double> g;
  for (std::uint64_t s = 0; s < 120; ++s) {
    const PointSet A = range_of(simulate_walk(m, derive_seed(31, 2 * s), d), 0, m);
    const PointSet B = range_of(simulate_walk(m, derive_seed(31, 2 * s + 1), d), 0, m);
    g.push_back(gamma_cross(A, B));
  }
  std::sort(g.begin(), g.end());
  // empirical log-survival against t^{3/5} at the 50%, 75%, 90% and 97% points
  std::vector<double> xs, ys;
  for (double q : {0.5, 0.75, 0.9, 0.97}) {
    const auto idx = static_cast<std::size_t>(q * static_cast<double>(g.size()));
    xs.push_back(std::pow(g[idx], 1 - 2.0 / (d - 2)));
    ys.push_back(std::log(1 - q));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i] / xs.size();
    my += ys[i] / ys.size();
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  CHECK(sxy / sxx < 0);
}
