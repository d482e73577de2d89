#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace walkcap {

inline constexpr int kMaxDim = 8;

struct Point {
  std::array<std::int64_t, kMaxDim> x{};
  int d = 5;

  Point() = default;
  explicit Point(int dim) : d(dim) {}
  Point(int dim, std::initializer_list<std::int64_t> coords);

  static Point origin(int dim) { return Point(dim); }
  static Point unit(int dim, int axis, int sign = 1);

  std::int64_t& operator[](int i) { return x[static_cast<std::size_t>(i)]; }
  std::int64_t operator[](int i) const { return x[static_cast<std::size_t>(i)]; }

  Point operator+(const Point& o) const;
  Point operator-(const Point& o) const;
  bool operator==(const Point& o) const;
  bool operator!=(const Point& o) const { return !(*this == o); }
  bool operator<(const Point& o) const;

  double norm() const;
  double norm2() const;
  std::int64_t l1() const;
  std::int64_t linf() const;
  bool is_origin() const;

  // sorted absolute coordinates, largest first
  Point canonical() const;
  std::string str() const;
};

struct PointHash {
  std::size_t operator()(const Point& p) const noexcept;
};

std::ostream& operator<<(std::ostream& os, const Point& p);

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next();
  // unbiased integer in [0, bound)
  std::uint64_t below(std::uint64_t bound);
  double uniform();
  double normal();

 private:
  std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

struct Walk {
  std::vector<Point> steps;
  std::uint64_t seed = 0;
  int d = 5;

  std::size_t n() const { return steps.empty() ? 0 : steps.size() - 1; }
  const Point& operator[](std::size_t k) const { return steps[k]; }
  bool is_nearest_neighbor() const;
};

Walk simulate_walk(std::size_t n, std::uint64_t seed, int d);
// continues a walk from `start` using the given generator
Walk simulate_from(const Point& start, std::size_t n, Rng& rng);
Walk walk_from_steps(const Point& start, const std::vector<int>& moves);

class PointSet {
 public:
  PointSet() = default;
  explicit PointSet(int dim) : d_(dim) {}
  PointSet(int dim, const std::vector<Point>& pts);

  // returns false if already present
  bool insert(const Point& p);
  bool contains(const Point& p) const { return index_.count(p) != 0; }
  std::optional<std::size_t> index_of(const Point& p) const;

  std::size_t size() const { return order_.size(); }
  bool empty() const { return order_.empty(); }
  int d() const { return d_; }
  const std::vector<Point>& points() const { return order_; }
  const Point& operator[](std::size_t i) const { return order_[i]; }
  const Point& lo() const { return lo_; }
  const Point& hi() const { return hi_; }
  double diameter() const;
  PointSet translated(const Point& z) const;

  auto begin() const { return order_.begin(); }
  auto end() const { return order_.end(); }

 private:
  int d_ = 5;
  std::vector<Point> order_;
  std::unordered_map<Point, std::size_t, PointHash> index_;
  Point lo_, hi_;
};

PointSet set_union(const PointSet& a, const PointSet& b);
PointSet set_intersection(const PointSet& a, const PointSet& b);
PointSet range_of(const Walk& walk, std::size_t k, std::size_t l);

// Q(x, r) = [x - r/2, x + r/2)^d; for integer r and center the offsets run
// over [-floor(r/2), -floor(r/2) + r - 1]
std::int64_t cube_low_offset(std::int64_t r);
bool in_cube(const Point& p, const Point& center, std::int64_t r);
PointSet cube_set(const Point& center, std::int64_t r);

class OccupancyIndex {
 public:
  OccupancyIndex(const Walk& walk, std::int64_t cellSide);

  std::int64_t cell_side() const { return side_; }
  std::size_t total() const { return total_; }
  std::size_t local_time(const Point& center, std::int64_t r) const;
  std::size_t cell_count() const { return cells_.size(); }
  std::size_t entries() const;

  struct Entry {
    std::size_t time;
    Point p;
  };
  const std::unordered_map<Point, std::vector<Entry>, PointHash>& cells() const {
    return cells_;
  }
  Point cell_of(const Point& p) const;

 private:
  std::int64_t side_;
  std::size_t total_;
  int d_;
  std::unordered_map<Point, std::vector<Entry>, PointHash> cells_;
};

std::size_t local_time(const OccupancyIndex& index, const Point& center, std::int64_t r);
std::size_t local_time_scan(const Walk& walk, const Point& center, std::int64_t r);

PointSet read_point_set(const std::string& path);
void write_point_set(const std::string& path, const PointSet& set);
Walk read_walk(const std::string& path);
void write_walk(const std::string& path, const Walk& walk);

std::int64_t floor_div(std::int64_t a, std::int64_t b);

}  // namespace walkcap
