#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "walkcap/lattice.hpp"

using namespace walkcap;

namespace {

int step_direction(const Point& a, const Point& b) {
  for (int i = 0; i < a.d; ++i) {
    const auto diff = b[i] - a[i];
    if (diff == 1) return 2 * i;
    if (diff == -1) return 2 * i + 1;
  }
  return -1;
}

Walk constant_walk(std::size_t n, int d) {
  Walk w;
  w.d = d;
  w.steps.assign(n + 1, Point::origin(d));
  return w;
}

}  // namespace

TEST_CASE("zero-step walk is the origin") {
  const Walk w = simulate_walk(0, 123, 5);
  REQUIRE(w.steps.size() == 1);
  CHECK(w[0].is_origin());
  CHECK(w.n() == 0);
}

TEST_CASE("one step lands on a unit neighbour") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Walk w = simulate_walk(1, s, 5);
    CHECK(w[1].l1() == 1);
  }
}

TEST_CASE("walks are nearest neighbour and reproducible") {
  const Walk a = simulate_walk(5000, 42, 5), b = simulate_walk(5000, 42, 5);
  CHECK(a.is_nearest_neighbor());
  for (std::size_t k = 0; k <= 5000; ++k) REQUIRE(a[k] == b[k]);
  const Walk c = simulate_walk(5000, 43, 5);
  bool differ = false;
  for (std::size_t k = 0; k <= 5000 && !differ; ++k) differ = a[k] != c[k];
  CHECK(differ);
}

TEST_CASE("step directions are uniform") {
  const std::size_t n = 1000000;
  const Walk w = simulate_walk(n, 2024, 5);
  std::array<std::size_t, 10> counts{};
  for (std::size_t k = 0; k < n; ++k) {
    const int dir = step_direction(w[k], w[k + 1]);
    REQUIRE(dir >= 0);
    ++counts[static_cast<std::size_t>(dir)];
  }
  const double p = 0.1, sigma = std::sqrt(n * p * (1 - p));
  for (auto c : counts) CHECK(std::abs(static_cast<double>(c) - n * p) < 4 * sigma);
}

TEST_CASE("rng below is in range and derived seeds differ") {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) REQUIRE(rng.below(7) < 7);
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(5, 17) == derive_seed(5, 17));
}

TEST_CASE("point arithmetic and canonical form") {
  const Point a(5, {3, -1, 0, 2, -4});
  const Point b(5, {1, 1, 1, 1, 1});
  CHECK((a + b) - b == a);
  CHECK(a.l1() == 10);
  CHECK(a.linf() == 4);
  CHECK(a.norm2() == doctest::Approx(30));
  CHECK(a.canonical() == Point(5, {4, 3, 2, 1, 0}));
  const std::int64_t big = std::int64_t{1} << 40;
  const Point c(5, {big, -big, big, 0, 0});
  CHECK((c + c)[0] == 2 * big);
  CHECK(c.l1() == 3 * big);
}

TEST_CASE("range_of basic identities") {
  const Walk w = simulate_walk(300, 77, 5);
  for (std::size_t k : {0u, 17u, 300u}) {
    const PointSet one = range_of(w, k, k);
    CHECK(one.size() == 1);
    CHECK(one.contains(w[k]));
  }
  const PointSet all = range_of(w, 0, 300);
  CHECK(all.size() <= 301);
  for (std::size_t m : {0u, 1u, 150u, 299u, 300u}) {
    const PointSet u = set_union(range_of(w, 0, m), range_of(w, m, 300));
    CHECK(u.size() == all.size());
    for (const auto& p : all) CHECK(u.contains(p));
  }
  CHECK_THROWS(range_of(w, 10, 5));
  CHECK_THROWS(range_of(w, 0, 301));
}

TEST_CASE("straight walk has n + 1 distinct sites") {
  const std::vector<int> moves(40, 0);
  const Walk w = walk_from_steps(Point::origin(5), moves);
  CHECK(range_of(w, 0, 40).size() == 41);
}

TEST_CASE("point set bookkeeping") {
  PointSet s(5);
  CHECK(s.insert(Point(5, {1, 2, 3, 4, 5})));
  CHECK_FALSE(s.insert(Point(5, {1, 2, 3, 4, 5})));
  CHECK(s.insert(Point(5, {-1, 0, 0, 0, 9})));
  CHECK(s.size() == 2);
  CHECK(s.lo() == Point(5, {-1, 0, 0, 0, 5}));
  CHECK(s.hi() == Point(5, {1, 2, 3, 4, 9}));
  CHECK(*s.index_of(Point(5, {-1, 0, 0, 0, 9})) == 1);
  const PointSet t = s.translated(Point(5, {1, 1, 1, 1, 1}));
  CHECK(t.contains(Point(5, {2, 3, 4, 5, 6})));
  const PointSet i = set_intersection(s, PointSet(5, {Point(5, {1, 2, 3, 4, 5})}));
  CHECK(i.size() == 1);
}

TEST_CASE("cube convention is half open") {
  CHECK(cube_low_offset(3) == -1);
  CHECK(cube_low_offset(4) == -2);
  CHECK(cube_set(Point::origin(5), 3).size() == 243);
  CHECK(cube_set(Point::origin(5), 4).size() == 1024);
  const Point o = Point::origin(5);
  CHECK(in_cube(Point(5, {-2, 0, 0, 0, 0}), o, 4));
  CHECK_FALSE(in_cube(Point(5, {2, 0, 0, 0, 0}), o, 4));
  CHECK(in_cube(Point(5, {1, 1, 1, 1, 1}), o, 4));
}

TEST_CASE("local time far from the walk is zero") {
  const Walk w = simulate_walk(1000, 5, 5);
  const OccupancyIndex idx(w, 4);
  CHECK(local_time(idx, Point(5, {1000, 0, 0, 0, 0}), 4) == 0);
}

TEST_CASE("aligned cells partition the local time") {
  for (std::int64_t r : {1, 2, 3, 5, 8}) {
    const Walk w = simulate_walk(2000, 100 + r, 5);
    const OccupancyIndex idx(w, r);
    std::size_t total = 0, entries = 0;
    for (const auto& [cell, list] : idx.cells()) {
      entries += list.size();
      // the aligned cube with this cell's low corner
      Point center = cell;
      for (int i = 0; i < 5; ++i) center[i] = cell[i] * r - cube_low_offset(r);
      total += local_time(idx, center, r);
    }
    CHECK(entries == 2001);
    CHECK(total == 2001);
  }
}

TEST_CASE("held walk has full local time") {
  const Walk w = constant_walk(50, 5);
  for (std::int64_t r : {1, 2, 7}) {
    const OccupancyIndex idx(w, r);
    CHECK(local_time(idx, Point::origin(5), r) == 51);
  }
}

TEST_CASE("local time agrees with a brute-force scan") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Walk w = simulate_walk(800, s, 5);
    for (std::int64_t r : {2, 3, 6}) {
      const OccupancyIndex idx(w, r);
      for (std::size_t k = 0; k <= 800; k += 37) {
        Point c = w[k];
        c[1] += static_cast<std::int64_t>(k % 3) - 1;
        REQUIRE(local_time(idx, c, r) == local_time_scan(w, c, r));
      }
    }
  }
}

TEST_CASE("point set and walk files round trip") {
  const auto dir = std::filesystem::temp_directory_path();
  const Walk w = simulate_walk(60, 31, 5);
  const auto wp = (dir / "walkcap_test_walk.txt").string();
  write_walk(wp, w);
  const Walk back = read_walk(wp);
  REQUIRE(back.n() == 60);
  CHECK(back.seed == 31);
  for (std::size_t k = 0; k <= 60; ++k) CHECK(back[k] == w[k]);
  const PointSet A = range_of(w, 0, 60);
  const auto sp = (dir / "walkcap_test_set.pts").string();
  write_point_set(sp, A);
  const PointSet B = read_point_set(sp);
  CHECK(B.size() == A.size());
  for (const auto& p : A) CHECK(B.contains(p));
  std::remove(wp.c_str());
  std::remove(sp.c_str());
}

TEST_CASE("floor division rounds toward minus infinity") {
  CHECK(floor_div(7, 3) == 2);
  CHECK(floor_div(-7, 3) == -3);
  CHECK(floor_div(-6, 3) == -2);
  CHECK(floor_div(0, 5) == 0);
}
