#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <unordered_map>

#include "walkcap/green.hpp"

using namespace walkcap;

namespace {

// frozen measurements of this code base (quadrature, relative tolerance 1e-12)
constexpr double kG0d5 = 1.156308124840231;
constexpr double kG0d7 = 1.093906315587849;
// frozen constants of the two-sided bounds, fit once on the calibration ball
constexpr double kC2 = 1.75;
constexpr double kGG = 2.0;

double harmonic_defect(const GreenKernel& K, const Point& x) {
  double s = 0;
  for (int i = 0; i < x.d; ++i)
    for (int sg : {1, -1}) s += K(x + Point::unit(x.d, i, sg));
  return s / (2 * x.d) - K(x) + (x.is_origin() ? 1.0 : 0.0);
}

// p_n(x) by enumerating all (2d)^n paths
double brute_pn(const Point& x, int n) {
  const int d = x.d;
  std::size_t total = 1;
  for (int k = 0; k < n; ++k) total *= static_cast<std::size_t>(2 * d);
  std::size_t hits = 0;
  for (std::size_t code = 0; code < total; ++code) {
    Point p = Point::origin(d);
    std::size_t c = code;
    for (int k = 0; k < n; ++k) {
      const int m = static_cast<int>(c % static_cast<std::size_t>(2 * d));
      c /= static_cast<std::size_t>(2 * d);
      p = p + Point::unit(d, m / 2, m % 2 ? -1 : 1);
    }
    if (p == x) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

// law of S_k by forward propagation on a hash map
std::vector<std::unordered_map<Point, double, PointHash>> step_laws(int d, std::size_t T) {
  std::vector<std::unordered_map<Point, double, PointHash>> laws(T + 1);
  laws[0][Point::origin(d)] = 1;
  for (std::size_t k = 1; k <= T; ++k)
    for (const auto& [y, p] : laws[k - 1])
      for (int i = 0; i < d; ++i)
        for (int sg : {1, -1}) laws[k][y + Point::unit(d, i, sg)] += p / (2 * d);
  return laws;
}

}  // namespace

TEST_CASE("quadrature value of G(0) is frozen") {
  CHECK(green_quadrature(Point::origin(5)).value == doctest::Approx(kG0d5).epsilon(1e-12));
  CHECK(green_quadrature(Point::origin(7)).value == doctest::Approx(kG0d7).epsilon(1e-12));
}

TEST_CASE("G(e1) = G(0) - 1 from harmonicity at the origin") {
  for (int d : {5, 7}) {
    const double g0 = green_quadrature(Point::origin(d)).value;
    const double g1 = green_quadrature(Point::unit(d, 0)).value;
    CHECK(std::abs(g1 - (g0 - 1)) < 1e-11);
  }
}

TEST_CASE("quadrature agrees with DP plus tail near the origin") {
  for (const Point& x : canonical_ball(5, 3)) {
    const double q = green_quadrature(x).value;
    const double dp = green_dp(x, 400).value;
    INFO(x.str());
    CHECK(std::abs(q - dp) < 1e-8);
  }
}

TEST_CASE("G(0) equals 1/(1 - return probability)") {
  const auto r = return_probability_dp(5, 4000);
  CHECK(1 / (1 - r.pReturn) == doctest::Approx(kG0d5).epsilon(1e-8));
}

TEST_CASE("kernel is harmonic off the origin") {
  for (int d : {5, 7}) {
    const GreenKernel& K = shared_kernel(d);
    double worst = 0;
    std::size_t tested = 0;
    for (const Point& x : canonical_ball(d, d == 5 ? 14 : 10)) {
      worst = std::max(worst, std::abs(harmonic_defect(K, x)));
      ++tested;
    }
    for (std::int64_t r : {30, 60, 120, 400})
      worst = std::max(worst, std::abs(harmonic_defect(K, Point(d, {r, 3, -1}))));
    CHECK(tested >= 1000);
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("kernel is invariant under the hyperoctahedral group") {
  const GreenKernel& K = shared_kernel(5);
  const Point x(5, {7, -3, 0, 2, 11});
  const double g = K(x);
  CHECK(K(Point(5, {-11, 2, 3, 0, 7})) == g);
  CHECK(K(Point(5, {0, 7, 11, -2, -3})) == g);
  GreenCache cache(5);
  CHECK(cache(x) == cache(Point(5, {3, 7, 2, 0, -11})));
}

TEST_CASE("kernel near table matches quadrature and far field stays accurate") {
  const GreenKernel& K = shared_kernel(5);
  for (const Point& x : {Point(5, {2, 1, 0, 0, 0}), Point(5, {5, 5, 1, 0, 0}), Point(5, {9, 0, 0, 0, 0})})
    CHECK(K(x) == doctest::Approx(green_quadrature(x).value).epsilon(1e-11));
  for (const Point& x : {Point(5, {40, 0, 0, 0, 0}), Point(5, {25, 20, 3, 1, 0}), Point(5, {70, 10, 0, 0, 0})})
    CHECK(K.far_field(x) == doctest::Approx(green_quadrature(x).value).epsilon(1e-10));
}

TEST_CASE("two-sided bounds with frozen constants") {
  for (int d : {5, 7}) {
    const GreenKernel& K = shared_kernel(d);
    const GreenBounds b = fit_green_bounds(K, 20);
    for (std::int64_t r : {0, 1, 5, 40, 200, 1000}) {
      const Point x(d, {r, r / 2});
      const double s = std::pow(x.norm(), d - 2) + 1;
      CHECK(K(x) * s >= b.c * (1 - 1e-9));
      CHECK(K(x) * s <= b.C * (1 + 1e-9));
    }
    CHECK(b.c > 0.05);
    CHECK(b.C == doctest::Approx(K.origin()));
  }
}

TEST_CASE("step probabilities match path enumeration") {
  for (const Point& x : {Point(5), Point::unit(5, 0), Point(5, {1, 1, 0, 0, 0}), Point(5, {2, 0, 0, 0, 0})}) {
    const auto p = transition_probabilities(x, 4);
    for (int n = 0; n <= 4; ++n) CHECK(p[static_cast<std::size_t>(n)] == doctest::Approx(brute_pn(x, n)).epsilon(1e-14));
  }
}

TEST_CASE("truncated green small cases") {
  const Point o = Point::origin(5), e1 = Point::unit(5, 0);
  CHECK(green_truncated(o, 0) == 1);
  CHECK(green_truncated(e1, 0) == 0);
  CHECK(green_truncated(e1, 2) == 0.1);
  CHECK(green_truncated(Point(5, {3, 2, 0, 0, 0}), 4) == 0);
}

TEST_CASE("truncated green is monotone in T and below G") {
  const GreenKernel& K = shared_kernel(5);
  for (const Point& x : {Point(5), Point::unit(5, 0), Point(5, {2, 1, 1, 0, 0}), Point(5, {4, 0, 0, 0, 0})}) {
    double prev = 0;
    for (std::size_t T : {0u, 1u, 2u, 5u, 10u, 40u, 100u}) {
      const double g = green_truncated(x, T);
      CHECK(g >= prev);
      CHECK(g <= K(x));
      prev = g;
    }
  }
  const auto tab = TruncatedGreenTable::dynamic_programming(5, 6);
  CHECK(tab(Point(5, {1, 1, 0, 0, 0})) == doctest::Approx(green_truncated(Point(5, {1, 1, 0, 0, 0}), 6)));
  CHECK(tab(Point(5, {4, 3, 0, 0, 0})) == 0);
}

TEST_CASE("phi_1 closed forms") {
  const GreenKernel& K = shared_kernel(5);
  CHECK(std::abs(phi_T(Point::origin(5), 1) - (2 * K.origin() - 1)) < 1e-9);
  for (const Point& x : {Point(5, {2, 0, 0, 0, 0}), Point(5, {1, 1, 0, 0, 0}), Point(5, {5, 3, 2, 0, 0})})
    CHECK(std::abs(phi_T(x, 1) - 2 * K(x)) < 1e-9);
}

TEST_CASE("phi_T matches the step-law convolution") {
  const GreenKernel& K = shared_kernel(5);
  for (std::size_t T : {2u, 5u}) {
    const auto laws = step_laws(5, T);
    for (const Point& x : {Point(5), Point::unit(5, 0), Point(5, {2, 1, 0, 0, 0}), Point(5, {6, 0, 0, 0, 0})}) {
      double s = 0;
      for (std::size_t k = 0; k <= T; ++k)
        for (const auto& [y, p] : laws[k]) s += p * K(x - y);
      s /= static_cast<double>(T);
      CHECK(phi_T(x, T) == doctest::Approx(s).epsilon(1e-12));
      // the other index convention drops k = 0
      CHECK(phi_T(x, T, PhiRange::OneToT) == doctest::Approx(s - K(x) / static_cast<double>(T)).epsilon(1e-12));
    }
  }
}

TEST_CASE("phi_T obeys both bound branches with one constant") {
  for (std::size_t T : {1u, 5u, 10u}) {
    for (const Point& x : canonical_ball(5, 20)) {
      const double n = x.norm();
      const double bound = std::min(1 / (1 + std::pow(n, 3)), 1 / (static_cast<double>(T) * (1 + n)));
      REQUIRE(phi_T(x, T) <= kC2 * bound);
    }
  }
}

TEST_CASE("G*G decays like |x|^{4-d}") {
  for (const Point& x : {Point(5), Point(5, {1, 0, 0, 0, 0}), Point(5, {3, 2, 0, 0, 0}), Point(5, {8, 0, 0, 0, 0})}) {
    const double gg = green_star_green_quadrature(x).value;
    CHECK(gg * (1 + x.norm()) <= kGG);
    CHECK(gg >= 0);
  }
}

TEST_CASE("green cache file round trip is verified on load") {
  const auto path = (std::filesystem::temp_directory_path() / "walkcap_green_cache.txt").string();
  GreenCache cache(5);
  for (const Point& x : canonical_l1_ball(5, 3)) cache(x);
  cache.save(path);
  GreenCache other(5);
  CHECK(other.load(path) == cache.size());
  CHECK(other(Point(5, {1, 1, 1, 0, 0})) == cache(Point(5, {1, 1, 1, 0, 0})));
  // overwrite G(e1): the harmonicity check at the origin rejects the file
  {
    std::FILE* f = std::fopen(path.c_str(), "a");
    std::fprintf(f, "1 0 0 0 0 0.5\n");
    std::fclose(f);
  }
  GreenCache bad(5);
  CHECK_THROWS(bad.load(path));
  std::remove(path.c_str());
}
