#include "walkcap/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "walkcap/errors.hpp"

namespace walkcap {

namespace {

constexpr std::int64_t kCoordLimit = std::int64_t{1} << 40;

void check_dim(int d) {
  if (d < 1 || d > kMaxDim) throw UsageError("dimension must lie in [1, 8], got " + std::to_string(d));
}

std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

}  // namespace

Point::Point(int dim, std::initializer_list<std::int64_t> coords) : d(dim) {
  check_dim(dim);
  if (coords.size() > static_cast<std::size_t>(dim)) throw UsageError("too many coordinates");
  std::size_t i = 0;
  for (auto c : coords) x[i++] = c;
}

Point Point::unit(int dim, int axis, int sign) {
  Point p(dim);
  p.x[static_cast<std::size_t>(axis)] = sign >= 0 ? 1 : -1;
  return p;
}

Point Point::operator+(const Point& o) const {
  Point r(d);
  for (int i = 0; i < d; ++i) r.x[i] = x[i] + o.x[i];
  return r;
}

Point Point::operator-(const Point& o) const {
  Point r(d);
  for (int i = 0; i < d; ++i) r.x[i] = x[i] - o.x[i];
  return r;
}

bool Point::operator==(const Point& o) const {
  if (d != o.d) return false;
  for (int i = 0; i < d; ++i)
    if (x[i] != o.x[i]) return false;
  return true;
}

bool Point::operator<(const Point& o) const {
  for (int i = 0; i < d; ++i)
    if (x[i] != o.x[i]) return x[i] < o.x[i];
  return false;
}

double Point::norm2() const {
  double s = 0;
  for (int i = 0; i < d; ++i) s += static_cast<double>(x[i]) * static_cast<double>(x[i]);
  return s;
}

double Point::norm() const { return std::sqrt(norm2()); }

std::int64_t Point::l1() const {
  std::int64_t s = 0;
  for (int i = 0; i < d; ++i) s += x[i] < 0 ? -x[i] : x[i];
  return s;
}

std::int64_t Point::linf() const {
  std::int64_t s = 0;
  for (int i = 0; i < d; ++i) s = std::max(s, x[i] < 0 ? -x[i] : x[i]);
  return s;
}

bool Point::is_origin() const {
  for (int i = 0; i < d; ++i)
    if (x[i] != 0) return false;
  return true;
}

Point Point::canonical() const {
  Point c(d);
  for (int i = 0; i < d; ++i) c.x[i] = x[i] < 0 ? -x[i] : x[i];
  std::sort(c.x.begin(), c.x.begin() + d, std::greater<>());
  return c;
}

std::string Point::str() const {
  std::ostringstream os;
  os << *this;
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const Point& p) {
  os << '(';
  for (int i = 0; i < p.d; ++i) os << (i ? "," : "") << p.x[i];
  return os << ')';
}

std::size_t PointHash::operator()(const Point& p) const noexcept {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(p.d);
  for (int i = 0; i < p.d; ++i) {
    h ^= static_cast<std::uint64_t>(p.x[i]) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h *= 0xbf58476d1ce4e5b9ULL;
  }
  return static_cast<std::size_t>(h ^ (h >> 31));
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t s = seed ^ (index * 0xd1b54a32d192ed03ULL);
  splitmix64(s);
  return splitmix64(s);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t st = derive_seed(seed, stream);
  for (auto& w : s_) w = splitmix64(st);
}

std::uint64_t Rng::next() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

std::uint64_t Rng::below(std::uint64_t bound) {
  // Lemire's multiply-shift with rejection
  std::uint64_t v = next();
  __uint128_t m = static_cast<__uint128_t>(v) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      v = next();
      m = static_cast<__uint128_t>(v) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

bool Walk::is_nearest_neighbor() const {
  for (std::size_t k = 1; k < steps.size(); ++k)
    if ((steps[k] - steps[k - 1]).l1() != 1) return false;
  return true;
}

Walk simulate_from(const Point& start, std::size_t n, Rng& rng) {
  Walk w;
  w.d = start.d;
  w.steps.reserve(n + 1);
  w.steps.push_back(start);
  Point cur = start;
  const auto choices = static_cast<std::uint64_t>(2 * start.d);
  for (std::size_t k = 0; k < n; ++k) {
    const auto m = rng.below(choices);
    const auto axis = static_cast<std::size_t>(m >> 1);
    cur.x[axis] += (m & 1) ? -1 : 1;
    w.steps.push_back(cur);
  }
  return w;
}

Walk simulate_walk(std::size_t n, std::uint64_t seed, int d) {
  if (d < 3) throw UsageError("simulate_walk needs d >= 3");
  check_dim(d);
  if (n >= static_cast<std::size_t>(kCoordLimit)) throw UsageError("walk length exceeds coordinate bound");
  Rng rng(seed);
  Walk w = simulate_from(Point::origin(d), n, rng);
  w.seed = seed;
  return w;
}

Walk walk_from_steps(const Point& start, const std::vector<int>& moves) {
  Walk w;
  w.d = start.d;
  w.steps.push_back(start);
  Point cur = start;
  for (int m : moves) {
    if (m < 0 || m >= 2 * start.d) throw UsageError("move index out of range");
    cur.x[static_cast<std::size_t>(m >> 1)] += (m & 1) ? -1 : 1;
    w.steps.push_back(cur);
  }
  return w;
}

PointSet::PointSet(int dim, const std::vector<Point>& pts) : d_(dim) {
  for (const auto& p : pts) insert(p);
}

bool PointSet::insert(const Point& p) {
  if (p.d != d_) throw UsageError("point dimension mismatch");
  auto [it, fresh] = index_.emplace(p, order_.size());
  if (!fresh) return false;
  if (order_.empty()) {
    lo_ = hi_ = p;
  } else {
    for (int i = 0; i < d_; ++i) {
      lo_.x[i] = std::min(lo_.x[i], p.x[i]);
      hi_.x[i] = std::max(hi_.x[i], p.x[i]);
    }
  }
  order_.push_back(p);
  return true;
}

std::optional<std::size_t> PointSet::index_of(const Point& p) const {
  auto it = index_.find(p);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

double PointSet::diameter() const {
  if (order_.empty()) return 0;
  double s = 0;
  for (int i = 0; i < d_; ++i) {
    const double w = static_cast<double>(hi_.x[i] - lo_.x[i]);
    s += w * w;
  }
  return std::sqrt(s);
}

PointSet PointSet::translated(const Point& z) const {
  PointSet r(d_);
  for (const auto& p : order_) r.insert(p + z);
  return r;
}

PointSet set_union(const PointSet& a, const PointSet& b) {
  PointSet r = a;
  for (const auto& p : b) r.insert(p);
  return r;
}

PointSet set_intersection(const PointSet& a, const PointSet& b) {
  PointSet r(a.d());
  for (const auto& p : a)
    if (b.contains(p)) r.insert(p);
  return r;
}

PointSet range_of(const Walk& walk, std::size_t k, std::size_t l) {
  if (k > l || l > walk.n()) throw UsageError("range_of: need 0 <= k <= l <= n");
  PointSet r(walk.d);
  for (std::size_t t = k; t <= l; ++t) r.insert(walk.steps[t]);
  return r;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t cube_low_offset(std::int64_t r) { return -(r / 2); }

bool in_cube(const Point& p, const Point& center, std::int64_t r) {
  const std::int64_t lo = cube_low_offset(r);
  for (int i = 0; i < p.d; ++i) {
    const std::int64_t off = p.x[i] - center.x[i];
    if (off < lo || off > lo + r - 1) return false;
  }
  return true;
}

PointSet cube_set(const Point& center, std::int64_t r) {
  if (r < 1) throw UsageError("cube side must be >= 1");
  const int d = center.d;
  PointSet s(d);
  const std::int64_t lo = cube_low_offset(r);
  std::array<std::int64_t, kMaxDim> off{};
  off.fill(0);
  while (true) {
    Point p(d);
    for (int i = 0; i < d; ++i) p.x[i] = center.x[i] + lo + off[i];
    s.insert(p);
    int i = 0;
    while (i < d && ++off[i] == r) off[i++] = 0;
    if (i == d) break;
  }
  return s;
}

OccupancyIndex::OccupancyIndex(const Walk& walk, std::int64_t cellSide)
    : side_(cellSide), total_(walk.steps.size()), d_(walk.d) {
  if (cellSide < 1) throw UsageError("cellSide must be >= 1");
  for (std::size_t k = 0; k < walk.steps.size(); ++k)
    cells_[cell_of(walk.steps[k])].push_back({k, walk.steps[k]});
}

Point OccupancyIndex::cell_of(const Point& p) const {
  Point c(d_);
  for (int i = 0; i < d_; ++i) c.x[i] = floor_div(p.x[i], side_);
  return c;
}

std::size_t OccupancyIndex::entries() const {
  std::size_t s = 0;
  for (const auto& [k, v] : cells_) s += v.size();
  return s;
}

std::size_t OccupancyIndex::local_time(const Point& center, std::int64_t r) const {
  if (r != side_) throw UsageError("local_time: index cellSide differs from cube side");
  const std::int64_t lo = cube_low_offset(r);
  Point first(d_), last(d_);
  for (int i = 0; i < d_; ++i) {
    first.x[i] = floor_div(center.x[i] + lo, side_);
    last.x[i] = floor_div(center.x[i] + lo + r - 1, side_);
  }
  std::size_t count = 0;
  Point cell = first;
  while (true) {
    auto it = cells_.find(cell);
    if (it != cells_.end()) {
      for (const auto& e : it->second)
        if (in_cube(e.p, center, r)) ++count;
    }
    int i = 0;
    while (i < d_) {
      if (cell.x[i] < last.x[i]) {
        ++cell.x[i];
        break;
      }
      cell.x[i] = first.x[i];
      ++i;
    }
    if (i == d_) break;
  }
  return count;
}

std::size_t local_time(const OccupancyIndex& index, const Point& center, std::int64_t r) {
  return index.local_time(center, r);
}

std::size_t local_time_scan(const Walk& walk, const Point& center, std::int64_t r) {
  std::size_t c = 0;
  for (const auto& p : walk.steps)
    if (in_cube(p, center, r)) ++c;
  return c;
}

namespace {

int parse_dim_line(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("d=", 0) != 0)
    throw UsageError(path + ": first line must be d=<dim>");
  const int d = std::stoi(line.substr(2));
  check_dim(d);
  return d;
}

std::vector<Point> parse_points(std::istream& in, int d, const std::string& path) {
  std::vector<Point> pts;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Point p(d);
    for (int i = 0; i < d; ++i) {
      if (!(ls >> p.x[i]))
        throw UsageError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(d) + " integers");
      if (p.x[i] > kCoordLimit || p.x[i] < -kCoordLimit) throw UsageError(path + ": coordinate out of bounds");
    }
    pts.push_back(p);
  }
  return pts;
}

}  // namespace

PointSet read_point_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  const int d = parse_dim_line(in, path);
  return PointSet(d, parse_points(in, d, path));
}

void write_point_set(const std::string& path, const PointSet& set) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path);
  out << "d=" << set.d() << '\n';
  for (const auto& p : set) {
    for (int i = 0; i < p.d; ++i) out << (i ? " " : "") << p.x[i];
    out << '\n';
  }
}

Walk read_walk(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  const int d = parse_dim_line(in, path);
  std::string line;
  if (!std::getline(in, line)) throw UsageError(path + ": missing seed/n line");
  std::uint64_t seed = 0;
  std::size_t n = 0;
  {
    std::istringstream ls(line);
    std::string tok;
    bool haveSeed = false, haveN = false;
    while (ls >> tok) {
      if (tok.rfind("seed=", 0) == 0) {
        seed = std::stoull(tok.substr(5));
        haveSeed = true;
      } else if (tok.rfind("n=", 0) == 0) {
        n = std::stoull(tok.substr(2));
        haveN = true;
      }
    }
    if (!haveSeed || !haveN) throw UsageError(path + ": second line must be seed=<u64> n=<len>");
  }
  Walk w;
  w.d = d;
  w.seed = seed;
  w.steps = parse_points(in, d, path);
  if (w.steps.size() != n + 1) throw UsageError(path + ": expected n+1 positions");
  if (!w.is_nearest_neighbor()) throw UsageError(path + ": positions are not a nearest-neighbor path");
  return w;
}

void write_walk(const std::string& path, const Walk& walk) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path);
  out << "d=" << walk.d << '\n' << "seed=" << walk.seed << " n=" << walk.n() << '\n';
  for (const auto& p : walk.steps) {
    for (int i = 0; i < p.d; ++i) out << (i ? " " : "") << p.x[i];
    out << '\n';
  }
}

}  // namespace walkcap
