#include <doctest.h>

#include <cmath>

#include "walkcap/capacity.hpp"
#include "walkcap/corrector.hpp"
#include "walkcap/crossterms.hpp"
#include "walkcap/green.hpp"
#include "walkcap/lattice.hpp"

using namespace walkcap;

namespace {

// full equilibrium solve at every k
double brute_xi(const Walk& w, std::size_t T) {
  const PhiTable phi(shared_kernel(w.d), T);
  double total = 0;
  for (std::size_t k = 0; k <= w.n(); ++k) {
    const auto sol = equilibrium(range_of(w, 0, k));
    for (std::size_t i = 0; i < sol.set.size(); ++i) total += sol.eq[i] * phi(sol.set[i] - w[k]);
  }
  return total;
}

double brute_chi_n(const Walk& w, std::size_t T) {
  const std::size_t n = w.n();
  double s = 0;
  for (std::size_t j = 0; j < T; ++j)
    for (std::size_t l = 1; l + 1 <= n / T; ++l) {
      const std::size_t split = j + l * T;
      if (split > n) continue;
      const std::size_t end = std::min(j + (l + 1) * T, n);
      const PointSet A = range_of(w, j, split), B = range_of(w, split, end);
      s += capacity(A) + capacity(B) - capacity(set_union(A, B));
    }
  return s / static_cast<double>(T);
}

}  // namespace

TEST_CASE("zero-step corrector is phi_T(0)/G(0)") {
  const Walk w = simulate_walk(0, 1, 5);
  for (std::size_t T : {1u, 10u}) {
    const auto tr = xi_n(w, T);
    REQUIRE(tr.perStep.size() == 1);
    CHECK(tr.total == doctest::Approx(phi_T(Point::origin(5), T) / shared_kernel(5).origin()).epsilon(1e-12));
  }
}

TEST_CASE("trace bookkeeping") {
  const Walk w = simulate_walk(120, 14, 5);
  const auto tr = xi_n(w, 10);
  REQUIRE(tr.perStep.size() == 121);
  double s = 0;
  for (double v : tr.perStep) {
    CHECK(v >= 0);
    s += v;
  }
  CHECK(tr.total == doctest::Approx(s).epsilon(1e-13));
  CHECK(tr.perStep[0] == doctest::Approx(phi_T(Point::origin(5), 10) / shared_kernel(5).origin()).epsilon(1e-12));
}

TEST_CASE("straight walk matches the per-step full solve") {
  const Walk w = walk_from_steps(Point::origin(5), std::vector<int>(50, 0));
  CHECK(xi_n(w, 10).total == doctest::Approx(brute_xi(w, 10)).epsilon(1e-9));
}

TEST_CASE("random walk matches the per-step full solve") {
  for (std::uint64_t s : {3u, 4u}) {
    const Walk w = simulate_walk(80, s, 5);
    CHECK(xi_n(w, 7).total == doctest::Approx(brute_xi(w, 7)).epsilon(1e-9));
  }
}

TEST_CASE("corrector is nondecreasing in n and replays bit for bit") {
  const Walk w = simulate_walk(200, 5, 5);
  const auto full = xi_n(w, 10);
  double prefix = 0;
  for (std::size_t k = 0; k <= 200; ++k) {
    const double next = prefix + full.perStep[k];
    CHECK(next >= prefix);
    prefix = next;
  }
  Walk half = w;
  half.steps.resize(101);
  CHECK(xi_n(half, 10).total <= full.total);
  CHECK(xi_n(w, 10).total == full.total);
}

TEST_CASE("d=7 corrector scales like n/T") {
  const std::size_t n = 400;
  std::vector<double> scaled;
  for (std::size_t T : {10u, 20u, 40u}) {
    double mean = 0;
    for (std::uint64_t s = 0; s < 50; ++s) mean += xi_n(simulate_walk(n, derive_seed(700, s), 7), T).total;
    mean /= 50;
    scaled.push_back(mean * static_cast<double>(T) / static_cast<double>(n));
  }
  const auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
  CHECK(*hi / *lo < 1.5);
}

TEST_CASE("block pairs") {
  CHECK(block_pairs(10, 10).empty());
  const auto p = block_pairs(25, 5);
  for (const auto& b : p) {
    CHECK(b.split == b.j + b.l * 5);
    CHECK(b.end == std::min<std::size_t>(b.j + (b.l + 1) * 5, 25));
    CHECK(b.l >= 1);
    CHECK(b.l <= 25 / 5 - 1);
  }
}

TEST_CASE("chi_n edge cases and determinism") {
  const Walk w = simulate_walk(64, 6, 5);
  CHECK(chi_n(w, 64) == 0);
  CHECK(chi_n(w, 8) == chi_n(simulate_walk(64, 6, 5), 8));
}

TEST_CASE("chi_n matches block-by-block capacity differences") {
  for (std::size_t T : {5u, 8u, 13u}) {
    const Walk w = simulate_walk(100, 40 + T, 5);
    CHECK(chi_n(w, T) == doctest::Approx(brute_chi_n(w, T)).epsilon(1e-9));
    for (const auto& term : chi_n_terms(w, T)) {
      CHECK(term.value >= -1e-9);
      CHECK(term.value <= static_cast<double>(T) + 1 + 1e-9);
    }
  }
}

TEST_CASE("block average capacity is within T of Cap(R_n)") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Walk w = simulate_walk(200, 80 + s, 5);
    for (std::size_t T : {7u, 10u, 25u}) {
      const double cap = capacity(range_of(w, 0, 200));
      CHECK(std::abs(block_average_capacity(w, T) - cap) <= static_cast<double>(T));
    }
  }
}

TEST_CASE("compensator estimate") {
  const Walk w = simulate_walk(100, 19, 5);
  const auto none = xi_star_mc(w, 100, 100, 1);
  CHECK(none.estimate == 0);
  CHECK(none.stdError == 0);
  CHECK_THROWS(xi_star_mc(w, 10, 10, 1));

  const auto a = xi_star_mc(w, 10, 100, 7);
  CHECK(a.estimate <= 2 * xi_n(w, 10).total + 3 * a.stdError);
  const auto b = xi_star_mc(w, 10, 400, 8);
  const double ratio = a.stdError / b.stdError;
  CHECK(ratio >= 2 * 0.7);
  CHECK(ratio <= 2 * 1.3);
}
