#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "walkcap/capacity.hpp"
#include "walkcap/deviation.hpp"
#include "walkcap/errors.hpp"
#include "walkcap/folding.hpp"
#include "walkcap/lattice.hpp"

using namespace walkcap;

namespace {

// O(n^2) scan of the definition
std::vector<std::size_t> scan_k_set(const Walk& w, double r, double rho) {
  const auto side = static_cast<std::int64_t>(std::ceil(r - 1e-12));
  const double thr = rho * std::pow(r, w.d);
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k <= w.n(); ++k) {
    std::size_t c = 0;
    for (std::size_t j = 0; j <= w.n(); ++j) c += in_cube(w[j], w[k], side);
    if (static_cast<double>(c) >= thr) out.push_back(k);
  }
  return out;
}

Walk held_walk(std::size_t n, int d) {
  Walk w;
  w.d = d;
  w.steps.assign(n + 1, Point::origin(d));
  return w;
}

Walk shifted(const Walk& w, std::int64_t s) {
  Walk out = w;
  for (auto& p : out.steps) p[0] += s;
  return out;
}

}  // namespace

TEST_CASE("k_set edge cases") {
  const Walk w = simulate_walk(100, 1, 5);
  CHECK(k_set(w, 2, 1.0).empty());  // 2^5 = 32 would need 32 visits in a tiny cube
  CHECK(k_set(w, 3, 0.5).empty());  // 0.5 * 243 > 101
  const Walk h = held_walk(60, 5);
  CHECK(k_set(h, 2, 1.0).size() == 61);
  CHECK(k_set(h, 2, 61.0 / 32).size() == 61);
}

TEST_CASE("k_set agrees with a brute-force scan") {
  const Walk w = simulate_walk(500, 12, 5);
  CHECK(k_set(w, 3, 0.1) == scan_k_set(w, 3, 0.1));
  CHECK(k_set(w, 2.4, 0.3) == scan_k_set(w, 2.4, 0.3));
  const Walk c = confine_sample(500, 4, 3, 5, ConfineSampler::Conditioned).walk.value();
  CHECK(k_set(c, 3, 0.1) == scan_k_set(c, 3, 0.1));
  CHECK(k_set(c, 3.7, 0.05) == scan_k_set(c, 3.7, 0.05));
}

TEST_CASE("k_set shrinks as rho grows") {
  const Walk c = confine_sample(800, 5, 9, 5, ConfineSampler::Conditioned).walk.value();
  std::size_t prev = 801;
  for (double rho : {0.01, 0.03, 0.1, 0.2, 0.4}) {
    const auto k = k_set(c, 3, rho);
    CHECK(k.size() <= prev);
    prev = k.size();
  }
}

TEST_CASE("high-dimensional ladder") {
  const std::size_t n = 4000;
  const double zeta = 1024;
  const auto lad = ladder(7, n, zeta, 2.0);
  CHECK_FALSE(lad.increasing);
  CHECK(lad.rhoBar == doctest::Approx(std::pow(zeta, -2.0 / 5)));
  CHECK(lad.level(0).L == doctest::Approx(zeta));
  const double LN = lad.level(lad.N).L;
  CHECK(LN >= n);
  CHECK(LN <= 2.0 * n);
  const double rhoM = lad.level(-lad.M).rho;
  CHECK(rhoM >= 1 - 1e-12);
  CHECK(rhoM <= 2);
  for (const auto& lv : lad.levels) {
    CHECK(lv.rho * std::pow(lv.r, 5) == doctest::Approx(2 * std::log(4000.0)).epsilon(1e-12));
    CHECK(lv.rho == doctest::Approx(std::pow(2.0, -lv.i) * lad.rhoBar));
    CHECK(lv.L == doctest::Approx(zeta * std::pow(2.0, 2.0 * lv.i / 5)));
    CHECK(lv.side == static_cast<std::int64_t>(std::ceil(lv.r)));
    CHECK(lv.threshold == doctest::Approx(lv.rho * std::pow(lv.r, 7)));
  }
  CHECK(lad.levels.size() == static_cast<std::size_t>(lad.M + lad.N + 1));
  CHECK_FALSE(lad.warnings.empty());
  CHECK(ladder(7, n, 3500, 2.0).warnings.empty());
}

TEST_CASE("five-dimensional ladder") {
  const std::size_t n = 400;
  const double zeta = std::pow(400.0, 0.8);
  const auto lad = ladder(5, n, zeta, 2.0);
  CHECK(lad.increasing);
  // typical density of the folding region at d=5
  CHECK(lad.rhoBar == doctest::Approx(std::pow(zeta, 5.0 / 3) / std::pow(400.0, 7.0 / 3)));
  CHECK(lad.level(0).L == doctest::Approx(400));
  const double rN = lad.level(lad.N).r;
  CHECK(rN >= 1);
  CHECK(rN <= 2);
  CHECK(lad.level(lad.N - 1).r > 2);
  for (const auto& lv : lad.levels) {
    CHECK(lv.rho * std::pow(lv.r, 3) == doctest::Approx(2 * std::log(400.0)).epsilon(1e-12));
    CHECK(lv.L == doctest::Approx(400 * std::pow(2.0, -2.0 * lv.i / 3)));
  }
}

TEST_CASE("ladder warnings and dimension six") {
  CHECK_FALSE(ladder(7, 4000, 5.0).warnings.empty());
  CHECK_FALSE(ladder(5, 4000, 5.0).warnings.empty());
  CHECK_THROWS_AS(ladder(6, 4000, 1000.0), UsageError);
  const auto six = ladder(6, 4000, 1000.0, 2.0, LadderVariant::Auto, true);
  CHECK_FALSE(six.levels.empty());
}

TEST_CASE("fold profile is a partition with the right subtraction order") {
  for (int d : {5, 7}) {
    const std::size_t n = d == 5 ? 1200 : 2000;
    const double zeta = d == 5 ? 900 : 300;
    const auto lad = ladder(d, n, zeta, 1.0);
    for (std::uint64_t s = 0; s < 3; ++s) {
      const Walk w = s == 0 ? simulate_walk(n, s, d)
                            : confine_sample(n, d == 5 ? 6 : 4, s, d, ConfineSampler::Conditioned, 1, n / 2).walk.value();
      const auto prof = fold_profile(w, lad, true);
      std::size_t total = prof.residual;
      std::set<std::size_t> seen;
      for (std::size_t q = 0; q < prof.index.size(); ++q) {
        total += prof.perLevel[q];
        REQUIRE(prof.kSets[q].size() == prof.perLevel[q]);
        for (auto k : prof.kSets[q]) CHECK(seen.insert(k).second);
      }
      CHECK(total == n + 1);
      CHECK(prof.total == n + 1);
      // rebuild K^_i from scans of the raw sets
      std::vector<std::set<std::size_t>> raw;
      for (const auto& lv : lad.levels) {
        const auto k = scan_k_set(w, lv.r, lv.rho);
        raw.emplace_back(k.begin(), k.end());
      }
      for (std::size_t q = 0; q < lad.levels.size(); ++q) {
        CHECK(prof.rawLevel[q] == raw[q].size());
        std::set<std::size_t> want = raw[q];
        for (std::size_t j = 0; j < lad.levels.size(); ++j) {
          const bool earlier = lad.increasing ? j > q : j < q;
          if (!earlier) continue;
          for (auto k : raw[j]) want.erase(k);
        }
        CHECK(std::set<std::size_t>(prof.kSets[q].begin(), prof.kSets[q].end()) == want);
      }
    }
  }
}

TEST_CASE("events from a profile") {
  const auto lad = ladder(7, 2000, 300, 1.0);
  const Walk w = confine_sample(2000, 4, 5, 7, ConfineSampler::Conditioned, 1, 300).walk.value();
  const auto prof = fold_profile(w, lad);
  CHECK(event_E(prof, lad, 1e9, 1e9, 1));
  bool anyInWindow = false;
  for (std::size_t q = 0; q < prof.index.size(); ++q)
    if (std::abs(prof.index[q]) <= 1 && prof.perLevel[q] > 0) anyInWindow = true;
  CHECK(event_E(prof, lad, 1e9, 0, 1) == !anyInWindow);
  CHECK(detector_fires(prof, lad, 1e-12, 1) == anyInWindow);
}

TEST_CASE("free walks rarely fold at the matched level") {
  const std::size_t n = 4000;
  const double zeta = std::pow(4000.0, 0.8);
  const auto lad = ladder(7, n, zeta, 2.0);
  const auto& l0 = lad.level(0);
  int hits = 0, empty = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const Walk w = simulate_walk(n, derive_seed(404, s), 7);
    hits += k_set(w, l0.r, l0.rho).size() >= l0.L;
    empty += scenario_stats(w, zeta, 1.0, 2.0).empty;
  }
  CHECK(hits == 0);
  CHECK(empty > 180);
}

TEST_CASE("scenario statistics on aligned cube unions") {
  const double cubeRatio = cube_capacity(5, 5) / std::pow(3125.0, 0.6);
  for (std::int64_t shift = 0; shift < 5; ++shift) {
    const Walk c = confine_sample(1000, 5, 70 + shift, 5, ConfineSampler::Conditioned).walk.value();
    const auto st = scenario_stats(shifted(c, shift), 1000, 1.0, 0.1);
    REQUIRE_FALSE(st.empty);
    CHECK(st.side == 5);
    CHECK(st.volume % 3125 == 0);
    CHECK(st.localTime <= 1001);
    REQUIRE_FALSE(st.capSkipped);
    CHECK(st.ratio <= 3 * cubeRatio);
    CHECK(st.ratio >= cubeRatio / 3);
    CHECK(st.cap <= static_cast<double>(st.volume));
  }
  const auto centers = std::vector<Point>{Point::origin(5)};
  CHECK(capacity(cube_union_boundary(centers, 5)) == doctest::Approx(cube_capacity(5, 5)).epsilon(1e-10));
  CHECK(aligned_center(Point(5, {2, -3, 0, 7, 12}), 5) == Point(5, {0, -5, 0, 5, 10}));
}
