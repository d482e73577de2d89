#include "walkcap/deviation.hpp"

#include <gsl/gsl_randist.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "walkcap/capacity.hpp"
#include "walkcap/errors.hpp"
#include "walkcap/green.hpp"
#include "walkcap/stats.hpp"

namespace walkcap {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::int64_t box_low(std::int64_t L) { return cube_low_offset(L); }

void check_box(std::int64_t L, int d) {
  if (L < 1) throw UsageError("box side must be >= 1");
  if (d < 1 || d > kMaxDim) throw UsageError("dimension out of range");
}

Point move_point(const Point& p, int m) {
  Point q = p;
  q.x[static_cast<std::size_t>(m >> 1)] += (m & 1) ? -1 : 1;
  return q;
}

}  // namespace

StrategyPlan plan_strategy(int d, std::size_t n, double zeta) {
  if (d < 5) throw UsageError("strategies are defined for d >= 5");
  if (!(zeta > 0)) throw UsageError("zeta must be positive");
  StrategyPlan p;
  p.d = d;
  p.n = n;
  p.zeta = zeta;
  const double nd = static_cast<double>(n);
  if (d == 6) {
    p.known = false;
    p.note = "unknown strategy in d=6";
    return p;
  }
  if (d == 5) {
    p.tau = n;
    p.R = static_cast<std::int64_t>(std::ceil(std::cbrt(nd * nd / zeta) - 1e-9));
    p.note = "time homogeneous: confined during the whole time";
  } else {
    p.tau = std::min<std::size_t>(n, static_cast<std::size_t>(std::ceil(zeta - 1e-9)));
    p.R = static_cast<std::int64_t>(std::ceil(std::pow(zeta, 1.0 / (d - 2)) - 1e-9));
    p.note = "time inhomogeneous: confined during tau steps";
  }
  p.R = std::max<std::int64_t>(p.R, 1);
  const double R = static_cast<double>(p.R);
  p.R2 = R * R;
  p.predictedExponent = static_cast<double>(p.tau) / p.R2;
  p.balance = static_cast<double>(p.tau) * static_cast<double>(p.tau) / std::pow(R, d - 2);
  return p;
}

double box_survival_rate(std::int64_t L, int d) {
  check_box(L, d);
  return std::cos(kPi / static_cast<double>(L + 1));
}

PowerIteration box_survival_power(std::int64_t L, int d, double tol, std::size_t maxIter) {
  check_box(L, d);
  std::size_t states = 1;
  for (int i = 0; i < d; ++i) states *= static_cast<std::size_t>(L);
  if (states > 50000000) throw UsageError("box too large for power iteration");
  std::vector<std::size_t> stride(static_cast<std::size_t>(d));
  std::size_t s = 1;
  for (int i = 0; i < d; ++i) {
    stride[static_cast<std::size_t>(i)] = s;
    s *= static_cast<std::size_t>(L);
  }
  std::vector<double> v(states, 1.0), w(states);
  std::vector<int> coord(static_cast<std::size_t>(d));
  const double inv2d = 1.0 / (2.0 * d);
  PowerIteration out;
  double prev = 0;
  for (std::size_t it = 0; it < maxIter; ++it) {
    std::fill(coord.begin(), coord.end(), 0);
    double vw = 0, vv = 0;
    for (std::size_t idx = 0; idx < states; ++idx) {
      double acc = 0;
      for (int i = 0; i < d; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        if (coord[iu] > 0) acc += v[idx - stride[iu]];
        if (coord[iu] + 1 < L) acc += v[idx + stride[iu]];
      }
      w[idx] = 0.5 * (v[idx] + inv2d * acc);
      vw += v[idx] * w[idx];
      vv += v[idx] * v[idx];
      for (int i = 0; i < d; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        if (++coord[iu] < L) break;
        coord[iu] = 0;
      }
    }
    const double mu = vw / vv;
    double norm = 0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    for (std::size_t idx = 0; idx < states; ++idx) v[idx] = w[idx] / norm;
    out.iterations = it + 1;
    out.lambda = 2 * mu - 1;
    out.change = std::abs(mu - prev);
    if (it > 2 && out.change < tol) break;
    prev = mu;
  }
  return out;
}

bool in_box(const Point& p, std::int64_t L) {
  const std::int64_t lo = box_low(L);
  for (int i = 0; i < p.d; ++i)
    if (p.x[i] < lo || p.x[i] > lo + L - 1) return false;
  return true;
}

std::vector<double> survival_curve(std::size_t n, std::int64_t L, const Point& start) {
  const int d = start.d;
  check_box(L, d);
  std::vector<double> F(n + 1, 0.0);
  if (!in_box(start, L)) return F;
  const std::int64_t lo = box_low(L);
  const auto Ls = static_cast<std::size_t>(L);
  auto one_dim = [&](std::int64_t x) {
    std::vector<double> s(n + 1), cur(Ls, 0.0), nxt(Ls);
    cur[static_cast<std::size_t>(x - lo)] = 1.0;
    s[0] = 1.0;
    for (std::size_t m = 1; m <= n; ++m) {
      double tot = 0;
      for (std::size_t y = 0; y < Ls; ++y) {
        const double a = y > 0 ? cur[y - 1] : 0.0;
        const double b = y + 1 < Ls ? cur[y + 1] : 0.0;
        nxt[y] = 0.5 * (a + b);
        tot += nxt[y];
      }
      cur.swap(nxt);
      s[m] = tot;
    }
    return s;
  };
  F = one_dim(start.x[0]);
  for (int j = 2; j <= d; ++j) {
    const auto s = one_dim(start.x[static_cast<std::size_t>(j - 1)]);
    std::vector<double> G(n + 1, 0.0);
    const double p = 1.0 / j;
    for (std::size_t m = 0; m <= n; ++m) {
      double acc = 0;
      for (std::size_t a = 0; a <= m; ++a) {
        const double b = gsl_ran_binomial_pdf(static_cast<unsigned>(a), p, static_cast<unsigned>(m));
        acc += b * s[a] * F[m - a];
      }
      G[m] = acc;
    }
    F.swap(G);
  }
  return F;
}

std::vector<double> survival_transfer(std::size_t n, std::int64_t L, const Point& start) {
  const int d = start.d;
  check_box(L, d);
  std::size_t states = 1;
  for (int i = 0; i < d; ++i) states *= static_cast<std::size_t>(L);
  if (states > 5000000) throw UsageError("box too large for the transfer matrix");
  std::vector<double> out(n + 1, 0.0);
  if (!in_box(start, L)) return out;
  const std::int64_t lo = box_low(L);
  std::vector<std::size_t> stride(static_cast<std::size_t>(d));
  std::size_t s = 1, origin = 0;
  for (int i = 0; i < d; ++i) {
    stride[static_cast<std::size_t>(i)] = s;
    origin += static_cast<std::size_t>(start.x[i] - lo) * s;
    s *= static_cast<std::size_t>(L);
  }
  std::vector<double> cur(states, 0.0), nxt(states);
  cur[origin] = 1.0;
  out[0] = 1.0;
  std::vector<int> coord(static_cast<std::size_t>(d));
  const double inv2d = 1.0 / (2.0 * d);
  for (std::size_t m = 1; m <= n; ++m) {
    std::fill(coord.begin(), coord.end(), 0);
    double tot = 0;
    for (std::size_t idx = 0; idx < states; ++idx) {
      double acc = 0;
      for (int i = 0; i < d; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        if (coord[iu] > 0) acc += cur[idx - stride[iu]];
        if (coord[iu] + 1 < L) acc += cur[idx + stride[iu]];
      }
      nxt[idx] = inv2d * acc;
      tot += nxt[idx];
      for (int i = 0; i < d; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        if (++coord[iu] < L) break;
        coord[iu] = 0;
      }
    }
    cur.swap(nxt);
    out[m] = tot;
  }
  return out;
}

ConfineResult confine_sample(std::size_t n, std::int64_t L, std::uint64_t seed, int d, ConfineSampler sampler,
                             std::size_t maxAttempts, std::size_t confined) {
  check_box(L, d);
  const std::size_t c = std::min(confined, n);
  ConfineResult res;
  Rng rng(seed);
  const Point origin = Point::origin(d);
  const int moves = 2 * d;

  if (sampler == ConfineSampler::Rejection) {
    while (res.attempts < maxAttempts) {
      ++res.attempts;
      Walk w;
      w.d = d;
      w.seed = seed;
      w.steps.reserve(n + 1);
      w.steps.push_back(origin);
      bool ok = true;
      for (std::size_t k = 1; k <= n; ++k) {
        const Point q = move_point(w.steps.back(), static_cast<int>(rng.below(static_cast<std::uint64_t>(moves))));
        if (k <= c && !in_box(q, L)) {
          ok = false;
          break;
        }
        w.steps.push_back(q);
      }
      if (ok) {
        res.walk = std::move(w);
        return res;
      }
      ++res.rejected;
    }
    return res;
  }

  // tilt by h(x) = prod_i sin(pi (x_i - lo + 1) / (L + 1)), the principal eigenfunction
  res.approximate = true;
  res.attempts = 1;
  const std::int64_t lo = box_low(L);
  std::vector<double> sinTab(static_cast<std::size_t>(L) + 2, 0.0);
  for (std::int64_t t = 0; t <= L + 1; ++t)
    sinTab[static_cast<std::size_t>(t)] = std::sin(kPi * static_cast<double>(t) / static_cast<double>(L + 1));
  sinTab.front() = 0;
  sinTab.back() = 0;
  const double lam = box_survival_rate(L, d);
  Walk w;
  w.d = d;
  w.seed = seed;
  w.steps.reserve(n + 1);
  w.steps.push_back(origin);
  std::vector<double> cum(static_cast<std::size_t>(moves));
  for (std::size_t k = 1; k <= n; ++k) {
    const Point& x = w.steps.back();
    int m = 0;
    if (k <= c) {
      double acc = 0;
      for (int mv = 0; mv < moves; ++mv) {
        const auto i = static_cast<std::size_t>(mv >> 1);
        const std::int64_t t = x.x[i] - lo + 1;
        const std::int64_t tn = t + ((mv & 1) ? -1 : 1);
        acc += sinTab[static_cast<std::size_t>(tn)] / sinTab[static_cast<std::size_t>(t)] / (2.0 * d * lam);
        cum[static_cast<std::size_t>(mv)] = acc;
      }
      const double u = rng.uniform() * acc;
      while (m + 1 < moves && cum[static_cast<std::size_t>(m)] <= u) ++m;
    } else {
      m = static_cast<int>(rng.below(static_cast<std::uint64_t>(moves)));
    }
    w.steps.push_back(move_point(x, m));
  }
  res.walk = std::move(w);
  return res;
}

std::vector<double> free_capacities(std::size_t n, int d, std::uint64_t seed, std::size_t count) {
  std::vector<double> caps(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Walk w = simulate_walk(n, derive_seed(seed, i), d);
    caps[i] = capacity(range_of(w, 0, n));
  }
  return caps;
}

namespace {

constexpr std::uint64_t kMeanBlock = 0x6d65616e626c6b31ULL;

double centering_mean(std::size_t n, int d, std::uint64_t seed, std::size_t count, double* stdErr) {
  const auto caps = free_capacities(n, d, derive_seed(seed, kMeanBlock), count);
  const Moments m = moments(caps);
  if (stdErr) *stdErr = m.std_error();
  return m.mean;
}

}  // namespace

DeviationEstimate deviation_prob_mc(std::size_t n, double zeta, std::size_t samples, int d, std::uint64_t seed,
                                    std::size_t meanSamples) {
  if (samples == 0) throw UsageError("deviation_prob_mc needs samples > 0");
  DeviationEstimate out;
  out.samples = samples;
  out.mean = centering_mean(n, d, seed, meanSamples ? meanSamples : samples, &out.meanStdError);
  const auto caps = free_capacities(n, d, seed, samples);
  for (double c : caps)
    if (c - out.mean <= -zeta) ++out.events;
  const double N = static_cast<double>(samples);
  out.estimate = static_cast<double>(out.events) / N;
  out.stdError = std::sqrt(out.estimate * (1 - out.estimate) / N);
  const Interval ci = wilson_interval(out.events, samples);
  out.lo = ci.lo;
  out.hi = ci.hi;
  if (out.events == 0) {
    out.oneSided = true;
    out.lo = 0;
    out.hi = 1 - std::pow(0.05, 1.0 / N);
  }
  return out;
}

PolymerEstimate polymer_Z_from(const std::vector<double>& caps, double mean, std::size_t n, double u, int d) {
  if (u < 0) throw UsageError("polymer_Z needs u >= 0");
  PolymerEstimate out;
  out.mean = mean;
  out.samples = caps.size();
  const double scale = u * std::pow(static_cast<double>(n), -2.0 / (d - 2));
  std::vector<double> w(caps.size());
  for (std::size_t i = 0; i < caps.size(); ++i) w[i] = u == 0 ? 1.0 : std::exp(-scale * (caps[i] - mean));
  const Jackknife jk = jackknife_mean(w);
  out.estimate = jk.estimate;
  out.stdError = jk.stdError;
  return out;
}

PolymerEstimate polymer_Z(std::size_t n, double u, std::size_t samples, int d, std::uint64_t seed,
                          std::size_t meanSamples) {
  if (samples == 0) throw UsageError("polymer_Z needs samples > 0");
  const double mean = centering_mean(n, d, seed, meanSamples ? meanSamples : samples, nullptr);
  return polymer_Z_from(free_capacities(n, d, seed, samples), mean, n, u, d);
}

Walk UpwardRecord::witness() const { return walk_from_steps(Point::origin(d), moves); }

bool no_double_backtrack(const std::vector<int>& moves) {
  // moves[j-1] goes from gamma(j-1) to gamma(j); gamma(k+2) = gamma(k) iff move k+2 undoes move k+1
  for (std::size_t j = 2; j <= moves.size(); j += 2)
    if ((moves[j - 1] ^ 1) == moves[j - 2]) return false;
  return true;
}

namespace {

// depth-first search over step sequences with an incrementally bordered factor
class PathSearch {
 public:
  PathSearch(std::size_t n, int d, bool canonical)
      : n_(n), d_(d), canonical_(canonical), kernel_(shared_kernel(d)) {
    factor_.reserve(n + 1);
    visit(Point::origin(d));
  }

  UpwardRecord run() {
    dfs(Point::origin(d_), 0);
    UpwardRecord r;
    r.n = n_;
    r.d = d_;
    r.cn = best_;
    r.moves = bestMoves_;
    r.evaluated = leaves_;
    r.method = canonical_ ? "exhaustive" : "dfs";
    return r;
  }

 private:
  // returns true if p was new
  bool visit(const Point& p) {
    auto& c = mult_[p];
    if (c++ > 0) return false;
    const std::size_t k = pts_.size();
    std::vector<double> g(k);
    for (std::size_t i = 0; i < k; ++i) g[i] = kernel_(p - pts_[i]);
    if (!factor_.append(g.data(), kernel_.origin())) throw NumericError("path search: factor lost definiteness");
    const double* r = factor_.row(k);
    double s = 1;
    for (std::size_t j = 0; j < k; ++j) s -= r[j] * y_[j];
    y_.push_back(s / r[k]);
    cap_.push_back((cap_.empty() ? 0.0 : cap_.back()) + y_.back() * y_.back());
    pts_.push_back(p);
    return true;
  }

  void leave(const Point& p, bool wasNew) {
    auto it = mult_.find(p);
    if (--it->second == 0) mult_.erase(it);
    if (!wasNew) return;
    pts_.pop_back();
    y_.pop_back();
    cap_.pop_back();
    factor_.truncate(pts_.size());
  }

  void dfs(const Point& p, int axesUsed) {
    if (moves_.size() == n_) {
      ++leaves_;
      const double c = cap_.back();
      if (c > best_) {
        best_ = c;
        bestMoves_ = moves_;
      }
      return;
    }
    for (int m = 0; m < 2 * d_; ++m) {
      const int axis = m >> 1;
      int nextUsed = axesUsed;
      if (canonical_) {
        if (axis > axesUsed) break;
        if (axis == axesUsed) {
          if (m & 1) continue;
          nextUsed = axesUsed + 1;
        }
      }
      const Point q = move_point(p, m);
      const bool isNew = visit(q);
      moves_.push_back(m);
      dfs(q, nextUsed);
      moves_.pop_back();
      leave(q, isNew);
    }
  }

  std::size_t n_;
  int d_;
  bool canonical_;
  const GreenKernel& kernel_;
  GrowingCholesky factor_;
  std::vector<double> y_, cap_;
  std::vector<Point> pts_;
  std::unordered_map<Point, int, PointHash> mult_;
  std::vector<int> moves_, bestMoves_;
  double best_ = -1;
  std::size_t leaves_ = 0;
};

}  // namespace

UpwardRecord cn_exact(std::size_t n, int d, std::size_t maxN) {
  if (d < 3 || d > kMaxDim) throw UsageError("dimension out of range");
  if (n > maxN) {
    std::ostringstream os;
    os << "cn_exact: n=" << n << " above the exhaustive cap " << maxN << "; use the beam search";
    throw UsageError(os.str());
  }
  return PathSearch(n, d, true).run();
}

UpwardRecord cn_bruteforce(std::size_t n, int d, std::size_t maxN) {
  if (d < 3 || d > kMaxDim) throw UsageError("dimension out of range");
  if (n > maxN) throw UsageError("cn_bruteforce: n above the cap");
  UpwardRecord r;
  r.n = n;
  r.d = d;
  r.method = "bruteforce";
  r.cn = -1;
  std::vector<int> moves(n, 0);
  const int base = 2 * d;
  while (true) {
    PointSet set(d);
    Point p = Point::origin(d);
    set.insert(p);
    for (int m : moves) {
      p = move_point(p, m);
      set.insert(p);
    }
    const double c = capacity(set);
    ++r.evaluated;
    if (c > r.cn) {
      r.cn = c;
      r.moves = moves;
    }
    std::size_t i = 0;
    while (i < n && ++moves[i] == base) moves[i++] = 0;
    if (i == n) break;
  }
  return r;
}

UpwardRecord cn_beam(std::size_t n, int d, std::size_t width, bool noDoubleBacktrack) {
  if (width < 1) throw UsageError("beam width must be >= 1");
  if (d < 3 || d > kMaxDim) throw UsageError("dimension out of range");
  const GreenKernel& kernel = shared_kernel(d);
  struct State {
    std::vector<int> moves;
    std::vector<Point> pts;
    PointSet set;
    GrowingCholesky factor;
    std::vector<double> y;
    double cap = 0;
    int axesUsed = 0;
    Point pos;
  };
  State root;
  root.set = PointSet(d);
  root.pos = Point::origin(d);
  root.set.insert(root.pos);
  root.pts.push_back(root.pos);
  const double g0 = kernel.origin();
  root.factor.append(nullptr, g0);
  root.y.push_back(1.0 / std::sqrt(g0));
  root.cap = 1.0 / g0;
  std::vector<State> beam{root};
  std::size_t evaluated = 1;
  for (std::size_t depth = 0; depth < n; ++depth) {
    std::vector<State> next;
    for (const State& s : beam) {
      for (int m = 0; m < 2 * d; ++m) {
        const int axis = m >> 1;
        if (axis > s.axesUsed) break;
        if (axis == s.axesUsed && (m & 1)) continue;
        // the move about to be made has index depth + 1
        if (noDoubleBacktrack && (depth + 1) % 2 == 0 && (m ^ 1) == s.moves.back()) continue;
        State c = s;
        c.moves.push_back(m);
        if (axis == s.axesUsed) ++c.axesUsed;
        c.pos = move_point(s.pos, m);
        if (c.set.insert(c.pos)) {
          const std::size_t k = c.pts.size();
          std::vector<double> g(k);
          for (std::size_t i = 0; i < k; ++i) g[i] = kernel(c.pos - c.pts[i]);
          if (!c.factor.append(g.data(), g0)) throw NumericError("beam: factor lost definiteness");
          const double* r = c.factor.row(k);
          double t = 1;
          for (std::size_t j = 0; j < k; ++j) t -= r[j] * c.y[j];
          c.y.push_back(t / r[k]);
          c.cap += c.y.back() * c.y.back();
          c.pts.push_back(c.pos);
        }
        ++evaluated;
        next.push_back(std::move(c));
      }
    }
    std::sort(next.begin(), next.end(), [](const State& a, const State& b) {
      if (a.cap != b.cap) return a.cap > b.cap;
      return a.moves < b.moves;
    });
    if (next.size() > width) next.resize(width);
    beam = std::move(next);
  }
  UpwardRecord r;
  r.n = n;
  r.d = d;
  r.method = "beam";
  r.cn = beam.front().cap;
  r.moves = beam.front().moves;
  r.evaluated = evaluated;
  return r;
}

}  // namespace walkcap
