#include "walkcap/folding.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "walkcap/capacity.hpp"
#include "walkcap/errors.hpp"

namespace walkcap {

std::vector<std::size_t> k_set(const Walk& walk, const OccupancyIndex& index, double r, double rho) {
  if (!(r >= 1)) throw UsageError("k_set needs r >= 1");
  if (!(rho > 0)) throw UsageError("k_set needs rho > 0");
  const auto side = static_cast<std::int64_t>(std::ceil(r));
  const double threshold = rho * std::pow(r, walk.d);
  std::vector<std::size_t> out;
  if (threshold > static_cast<double>(walk.steps.size())) return out;
  std::unordered_map<Point, bool, PointHash> memo;
  for (std::size_t k = 0; k < walk.steps.size(); ++k) {
    auto it = memo.find(walk[k]);
    if (it == memo.end()) {
      const bool in = static_cast<double>(index.local_time(walk[k], side)) >= threshold;
      it = memo.emplace(walk[k], in).first;
    }
    if (it->second) out.push_back(k);
  }
  return out;
}

std::vector<std::size_t> k_set(const Walk& walk, double r, double rho) {
  if (!(r >= 1)) throw UsageError("k_set needs r >= 1");
  const OccupancyIndex index(walk, static_cast<std::int64_t>(std::ceil(r)));
  return k_set(walk, index, r, rho);
}

const LadderLevel& ScaleLadder::level(int i) const {
  if (i < -M || i > N) throw UsageError("ladder level out of range");
  return levels[static_cast<std::size_t>(i + M)];
}

ScaleLadder ladder(int d, std::size_t n, double zeta, double C0, LadderVariant variant, bool allowD6) {
  if (n < 2) throw UsageError("ladder needs n >= 2");
  if (!(zeta > 0)) throw UsageError("ladder needs zeta > 0");
  if (!(C0 > 0)) throw UsageError("ladder needs C0 > 0");
  if (variant == LadderVariant::Auto) {
    if (d == 5)
      variant = LadderVariant::FiveDim;
    else if (d >= 7 || (d == 6 && allowD6))
      variant = LadderVariant::HighDim;
    else
      throw UsageError("no folding ladder for d=" + std::to_string(d));
  }
  if (variant == LadderVariant::FiveDim && d != 5) throw UsageError("the five-dimensional ladder needs d=5");
  if (variant == LadderVariant::HighDim && d < 7 && !(d == 6 && allowD6))
    throw UsageError("the high-dimensional ladder needs d >= 7");

  ScaleLadder lad;
  lad.d = d;
  lad.n = n;
  lad.zeta = zeta;
  lad.C0 = C0;
  const double nd = static_cast<double>(n);
  const double dd = static_cast<double>(d);
  const double logn = std::log(nd);
  const double clog = C0 * logn;
  if (d == 6) lad.warnings.push_back("d=6: generic ladder used, no strategy is known");

  auto make = [&](int i, double rho, double L) {
    LadderLevel lv;
    lv.i = i;
    lv.rho = rho;
    lv.r = std::pow(clog / rho, 1.0 / (dd - 2));
    lv.side = static_cast<std::int64_t>(std::ceil(lv.r - 1e-12));
    lv.threshold = rho * std::pow(lv.r, dd);
    lv.L = L;
    return lv;
  };

  if (variant == LadderVariant::HighDim) {
    const double lo = std::pow(nd, (dd - 2) / dd) * logn;
    if (zeta < lo || zeta > nd) {
      std::ostringstream os;
      os << "zeta=" << zeta << " outside the window [" << lo << ", " << nd << "]";
      lad.warnings.push_back(os.str());
    }
    lad.increasing = false;
    lad.rhoBar = std::pow(zeta, -2.0 / (dd - 2));
    lad.N = static_cast<int>(std::ceil((dd - 2) / 2 * std::log2(nd / zeta)));
    lad.M = static_cast<int>(std::ceil(std::log2(1.0 / lad.rhoBar)));
    lad.M = std::max(lad.M, 0);
    for (int i = -lad.M; i <= lad.N; ++i)
      lad.levels.push_back(make(i, std::ldexp(lad.rhoBar, -i), zeta * std::pow(2.0, 2.0 * i / (dd - 2))));
  } else {
    const double lo = std::pow(nd, 5.0 / 7.0) * logn;
    if (zeta < lo || zeta > nd) {
      std::ostringstream os;
      os << "zeta=" << zeta << " outside the window [" << lo << ", " << nd << "]";
      lad.warnings.push_back(os.str());
    }
    lad.increasing = true;
    lad.rhoBar = std::pow(zeta, 5.0 / 3.0) * std::pow(nd, -7.0 / 3.0);
    // smallest N with r_N <= 2, i.e. rho_N >= C0 log n / 8
    lad.N = static_cast<int>(std::ceil(std::log2(clog / (8.0 * lad.rhoBar)) - 1e-12));
    // lowest level whose threshold rho r^5 = C0 log n r^2 can still be met by n + 1 visits
    int M = 0;
    while (true) {
      const LadderLevel lv = make(-(M + 1), std::ldexp(lad.rhoBar, -(M + 1)), 0);
      if (lv.threshold > nd + 1 || M >= 1000) break;
      ++M;
    }
    lad.M = M;
    if (-lad.M > lad.N) lad.M = -lad.N;
    for (int i = -lad.M; i <= lad.N; ++i)
      lad.levels.push_back(make(i, std::ldexp(lad.rhoBar, i), nd * std::pow(2.0, -2.0 * i / 3.0)));
  }
  return lad;
}

std::size_t FoldProfile::at(int i) const {
  for (std::size_t q = 0; q < index.size(); ++q)
    if (index[q] == i) return perLevel[q];
  throw UsageError("fold profile has no level " + std::to_string(i));
}

FoldProfile fold_profile(const Walk& walk, const ScaleLadder& lad, bool keepSets) {
  if (walk.n() != lad.n) throw UsageError("ladder was built for a different n");
  if (walk.d != lad.d) throw UsageError("ladder was built for a different d");
  FoldProfile prof;
  prof.total = walk.steps.size();
  const std::size_t nl = lad.levels.size();
  std::vector<std::vector<std::size_t>> raw(nl);
  std::unordered_map<std::int64_t, OccupancyIndex> indices;
  for (std::size_t q = 0; q < nl; ++q) {
    const auto& lv = lad.levels[q];
    if (lv.threshold > static_cast<double>(prof.total)) continue;
    auto it = indices.find(lv.side);
    if (it == indices.end()) it = indices.emplace(lv.side, OccupancyIndex(walk, lv.side)).first;
    raw[q] = k_set(walk, it->second, std::max(lv.r, 1.0), lv.rho);
  }
  // d >= 7 subtracts the lower levels, the five-dimensional ladder the higher ones
  std::vector<char> taken(prof.total, 0);
  std::vector<std::vector<std::size_t>> hat(nl);
  for (std::size_t s = 0; s < nl; ++s) {
    const std::size_t q = lad.increasing ? nl - 1 - s : s;
    for (std::size_t k : raw[q])
      if (!taken[k]) {
        taken[k] = 1;
        hat[q].push_back(k);
      }
  }
  std::size_t covered = 0;
  for (std::size_t q = 0; q < nl; ++q) {
    prof.index.push_back(lad.levels[q].i);
    prof.perLevel.push_back(hat[q].size());
    prof.rawLevel.push_back(raw[q].size());
    covered += hat[q].size();
  }
  prof.residual = prof.total - covered;
  if (keepSets) prof.kSets = std::move(hat);
  return prof;
}

bool event_E(const FoldProfile& prof, const ScaleLadder& lad, double A, double delta, int I) {
  for (std::size_t q = 0; q < prof.index.size(); ++q) {
    const int i = prof.index[q];
    const double L = lad.levels[q].L;
    const double v = static_cast<double>(prof.perLevel[q]);
    if (i >= -I && i <= I) {
      if (v > delta * L) return false;
    } else if (i > I || !lad.increasing) {
      if (v > A * L) return false;
    }
  }
  return true;
}

bool detector_fires(const FoldProfile& prof, const ScaleLadder& lad, double delta, int I) {
  for (std::size_t q = 0; q < prof.index.size(); ++q) {
    const int i = prof.index[q];
    if (i < -I || i > I) continue;
    if (static_cast<double>(prof.perLevel[q]) >= delta * lad.levels[q].L) return true;
  }
  return false;
}

Point aligned_center(const Point& p, std::int64_t side) {
  const std::int64_t lo = cube_low_offset(side);
  Point c(p.d);
  for (int i = 0; i < p.d; ++i) c.x[i] = side * floor_div(p.x[i] - lo, side);
  return c;
}

PointSet cube_union_boundary(const std::vector<Point>& centers, std::int64_t side) {
  PointSet out(centers.empty() ? 5 : centers.front().d);
  if (centers.empty()) return out;
  const int d = centers.front().d;
  std::unordered_set<Point, PointHash> cset(centers.begin(), centers.end());
  auto inV = [&](const Point& p) { return cset.count(aligned_center(p, side)) != 0; };
  for (const auto& c : centers) {
    for (const auto& p : cube_set(c, side)) {
      bool boundary = false;
      for (int i = 0; i < d && !boundary; ++i)
        for (int s : {-1, 1}) {
          Point q = p;
          q.x[i] += s;
          if (!inV(q)) {
            boundary = true;
            break;
          }
        }
      if (boundary) out.insert(p);
    }
  }
  return out;
}

ScenarioStats scenario_stats(const Walk& walk, double zeta, double beta, double C0, std::size_t maxBoundary) {
  const int d = walk.d;
  if (d != 5 && d < 7) throw UsageError("scenario statistics need d=5 or d>=7");
  if (!(zeta > 0) || !(beta > 0) || !(C0 > 0)) throw UsageError("scenario statistics need positive zeta, beta, C0");
  const double nd = static_cast<double>(walk.n());
  const double dd = static_cast<double>(d);
  ScenarioStats st;
  st.rhoTyp = d == 5 ? std::pow(zeta, 5.0 / 3.0) * std::pow(nd, -7.0 / 3.0) : std::pow(zeta, -2.0 / (dd - 2));
  st.tauTyp = d == 5 ? nd : zeta;
  st.r = std::pow(C0 * std::log(std::max(nd, 2.0)) / st.rhoTyp, 1.0 / (dd - 2));
  st.side = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(st.r - 1e-12)));
  st.threshold = beta * st.rhoTyp * std::pow(st.r, dd);

  std::unordered_map<Point, std::size_t, PointHash> counts;
  for (const auto& p : walk.steps) ++counts[aligned_center(p, st.side)];
  std::vector<Point> centers;
  for (const auto& [c, v] : counts)
    if (static_cast<double>(v) >= st.threshold) {
      centers.push_back(c);
      st.localTime += v;
    }
  std::sort(centers.begin(), centers.end());
  st.cubes = centers.size();
  st.empty = centers.empty();
  if (st.empty) return st;
  std::size_t vol = 1;
  for (int i = 0; i < d; ++i) vol *= static_cast<std::size_t>(st.side);
  st.volume = vol * st.cubes;
  if (st.volume > 64 * maxBoundary) {
    st.capSkipped = true;
    return st;
  }
  const PointSet boundary = cube_union_boundary(centers, st.side);
  if (boundary.size() > maxBoundary) {
    st.capSkipped = true;
    return st;
  }
  SolverOptions opt;
  opt.maxSize = std::max(opt.maxSize, maxBoundary);
  st.cap = capacity(boundary, opt);
  st.ratio = st.cap / std::pow(static_cast<double>(st.volume), 1.0 - 2.0 / dd);
  return st;
}

}  // namespace walkcap
