#include "walkcap/corrector.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "walkcap/capacity.hpp"
#include "walkcap/errors.hpp"

namespace walkcap {

CorrectorTrace xi_n(const Walk& walk, std::size_t T, const CorrectorOptions& opt) {
  const std::size_t n = walk.n();
  if (T < 1) throw UsageError("xi_n needs T >= 1");
  if (n > opt.maxN) {
    std::ostringstream os;
    os << "xi_n: n=" << n << " exceeds the configured cap " << opt.maxN;
    throw UsageError(os.str());
  }
  const GreenKernel& kernel = shared_kernel(walk.d);
  const PhiTable phi(kernel, T, opt.range);

  CorrectorTrace tr;
  tr.T = T;
  tr.perStep.reserve(n + 1);
  EquilibriumSolution sol;
  sol.set = PointSet(walk.d);
  for (std::size_t k = 0; k <= n; ++k) {
    const Point& s = walk[k];
    if (!sol.set.contains(s)) {
      if (sol.factor) sol.factor->reserve(n + 1);
      extend_in_place(sol, s, true);
    }
    double c = 0;
    for (std::size_t i = 0; i < sol.set.size(); ++i) c += sol.eq[i] * phi(sol.set[i] - s);
    tr.perStep.push_back(c);
    tr.total += c;
  }
  tr.refactorizations = sol.refactorizations;
  return tr;
}

std::vector<BlockPair> block_pairs(std::size_t n, std::size_t T) {
  if (T < 1) throw UsageError("block length must be positive");
  std::vector<BlockPair> out;
  const std::size_t m = n / T;
  if (m < 2) return out;
  for (std::size_t j = 0; j < T; ++j)
    for (std::size_t l = 1; l + 1 <= m; ++l) {
      BlockPair p;
      p.j = j;
      p.l = l;
      p.split = j + l * T;
      p.end = std::min(j + (l + 1) * T, n);
      out.push_back(p);
    }
  return out;
}

namespace {

// distinct points of R[a, b] in first-visit order, and for each time the count seen so far
void first_visits(const Walk& walk, std::size_t a, std::size_t b, std::vector<Point>& pts,
                  std::vector<std::size_t>& countAt) {
  PointSet seen(walk.d);
  pts.clear();
  countAt.assign(b - a + 1, 0);
  for (std::size_t t = a; t <= b; ++t) {
    if (seen.insert(walk[t])) pts.push_back(walk[t]);
    countAt[t - a] = pts.size();
  }
}

}  // namespace

std::vector<ChiTerm> chi_n_terms(const Walk& walk, std::size_t T) {
  const std::size_t n = walk.n();
  if (T > n) throw UsageError("chi_n needs T <= n");
  const auto pairs = block_pairs(n, T);
  std::vector<ChiTerm> out;
  out.reserve(pairs.size());
  std::vector<Point> pts;
  std::vector<std::size_t> countAt;
  std::size_t idx = 0;
  for (std::size_t j = 0; j < T && idx < pairs.size(); ++j) {
    std::size_t last = j;
    for (std::size_t q = idx; q < pairs.size() && pairs[q].j == j; ++q) last = pairs[q].end;
    first_visits(walk, j, last, pts, countAt);
    const auto caps = prefix_capacities(pts);
    for (; idx < pairs.size() && pairs[idx].j == j; ++idx) {
      const BlockPair& p = pairs[idx];
      const double capLeft = caps[countAt[p.split - j] - 1];
      const double capUnion = caps[countAt[p.end - j] - 1];
      const double capRight = capacity(range_of(walk, p.split, p.end));
      out.push_back({p, capLeft + capRight - capUnion});
    }
  }
  return out;
}

double chi_n(const Walk& walk, std::size_t T) {
  double s = 0;
  for (const auto& t : chi_n_terms(walk, T)) s += t.value;
  return s / static_cast<double>(T);
}

double block_average_capacity(const Walk& walk, std::size_t T) {
  const std::size_t n = walk.n();
  if (T < 1 || T > n) throw UsageError("block average needs 1 <= T <= n");
  const std::size_t m = n / T;
  double s = 0;
  for (std::size_t j = 0; j < T; ++j) s += capacity(range_of(walk, j, std::min(j + m * T, n)));
  return s / static_cast<double>(T);
}

XiStarEstimate xi_star_mc(const Walk& walk, std::size_t T, std::size_t inner, std::uint64_t seed) {
  if (inner < 100) throw UsageError("xi_star_mc needs at least 100 inner samples");
  const std::size_t n = walk.n();
  if (T < 1 || T > n) throw UsageError("xi_star_mc needs 1 <= T <= n");
  XiStarEstimate out;
  out.inner = inner;
  const auto pairs = block_pairs(n, T);
  out.terms = pairs.size();
  if (pairs.empty()) return out;

  double var = 0;
  std::size_t idx = 0;
  for (std::size_t j = 0; j < T && idx < pairs.size(); ++j) {
    EquilibriumSolution base;
    base.set = PointSet(walk.d);
    std::size_t t = j;
    for (; idx < pairs.size() && pairs[idx].j == j; ++idx) {
      const BlockPair& p = pairs[idx];
      for (; t <= p.split; ++t)
        if (!base.set.contains(walk[t])) extend_in_place(base, walk[t], false);
      const std::size_t len = p.end - p.split;
      Rng rng(derive_seed(seed, j), p.l);
      double m = 0, m2 = 0;
      for (std::size_t s = 0; s < inner; ++s) {
        const Walk cont = simulate_from(walk[p.split], len, rng);
        const double capRight = capacity(PointSet(walk.d, cont.steps));
        const double capUnion = capacity_with(base, cont.steps);
        const double c = base.cap + capRight - capUnion;
        m += c;
        m2 += c * c;
      }
      m /= static_cast<double>(inner);
      const double v = std::max(0.0, m2 / static_cast<double>(inner) - m * m) * static_cast<double>(inner) /
                       static_cast<double>(inner - 1);
      out.estimate += m;
      var += v / static_cast<double>(inner);
    }
  }
  const double Td = static_cast<double>(T);
  out.estimate /= Td;
  out.stdError = std::sqrt(var) / Td;
  return out;
}

}  // namespace walkcap
