#include "walkcap/crossterms.hpp"

#include <algorithm>
#include <cmath>

#include "walkcap/errors.hpp"

namespace walkcap {

namespace {

void require_nonempty(const PointSet& A, const PointSet& B) {
  if (A.empty() || B.empty()) throw UsageError("cross terms need nonempty sets");
  if (A.d() != B.d()) throw UsageError("cross terms need sets of the same dimension");
}

// u[x] = sum_{y in B} G(x-y) wB[y] for x in A and v[y] = sum_{x in A} G(y-x) wA[x] for y in B;
// also returns the plain sums sum_y G(x-y) in gRow
void cross_products(const PointSet& A, const PointSet& B, const std::vector<double>& wA,
                    const std::vector<double>& wB, std::vector<double>& u, std::vector<double>& v,
                    std::vector<double>& gRow) {
  const GreenKernel& kernel = shared_kernel(A.d());
  const auto dd = static_cast<std::size_t>(A.d());
  const std::size_t na = A.size(), nb = B.size();
  u.assign(na, 0.0);
  v.assign(nb, 0.0);
  gRow.assign(na, 0.0);
  std::vector<std::int64_t> z(nb * dd);
  std::vector<double> g(nb);
  for (std::size_t i = 0; i < na; ++i) {
    const Point& x = A[i];
    for (std::size_t j = 0; j < nb; ++j)
      for (std::size_t k = 0; k < dd; ++k) z[j * dd + k] = x.x[k] - B[j].x[k];
    kernel.evaluate_batch(z.data(), nb, g.data());
    double su = 0, sg = 0;
    for (std::size_t j = 0; j < nb; ++j) {
      su += g[j] * wB[j];
      sg += g[j];
      v[j] += g[j] * wA[i];
    }
    u[i] = su;
    gRow[i] = sg;
  }
}

}  // namespace

CrossTermReport chi_variants(const PointSet& A, const PointSet& B) {
  require_nonempty(A, B);
  CrossTermReport r;
  const PointSet U = set_union(A, B);  // A first, then B \ A
  const EquilibriumSolution solU = equilibrium(U);
  const EquilibriumSolution solB = equilibrium(B);
  const std::size_t na = A.size();

  std::vector<double> eA(solU.y.begin(), solU.y.begin() + static_cast<std::ptrdiff_t>(na));
  solU.factor->backward(eA.data(), na);
  r.capA = 0;
  for (std::size_t i = 0; i < na; ++i) r.capA += solU.y[i] * solU.y[i];
  r.capB = solB.cap;
  r.capUnion = solU.cap;
  r.capIntersection = capacity(set_intersection(A, B));
  r.chiC = r.capA + r.capB - r.capUnion;

  std::vector<double> u, v, gRow;
  cross_products(A, B, eA, solB.eq, u, v, gRow);
  for (std::size_t i = 0; i < na; ++i) {
    const double eU = solU.eq[i];
    r.chiAB += eU * u[i];
    r.chiTilde += eA[i] * u[i];
    r.chiBar += eA[i] * gRow[i];
    r.gammaAB += u[i];
    if (!B.contains(A[i])) r.chiZero += eU * u[i];
  }
  for (std::size_t j = 0; j < B.size(); ++j) r.chiBA += solU.e(B[j]) * v[j];
  r.epsilon = r.chiAB + r.chiBA - r.chiC;
  return r;
}

double chi_C(const PointSet& A, const PointSet& B) {
  require_nonempty(A, B);
  const PointSet U = set_union(A, B);
  const auto caps = prefix_capacities(U.points());
  return caps[A.size() - 1] + capacity(B) - caps.back();
}

double chi(const PointSet& A, const PointSet& B) { return chi_variants(A, B).chiAB; }

double gamma_cross(const PointSet& A, const PointSet& B) {
  require_nonempty(A, B);
  const EquilibriumSolution solB = equilibrium(B);
  const std::vector<double> ones(A.size(), 1.0);
  std::vector<double> u, v, gRow;
  cross_products(A, B, ones, solB.eq, u, v, gRow);
  double s = 0;
  for (double x : u) s += x;
  return s;
}

std::vector<std::size_t> DyadicRecord::piece_lengths() const {
  std::vector<std::size_t> out;
  if (levels.empty()) return out;
  const auto& b = levels.back().bounds;
  for (std::size_t i = 0; i + 1 < b.size(); ++i) out.push_back(b[i + 1] - b[i]);
  return out;
}

DyadicRecord dyadic_decompose(const Walk& walk, int L) {
  const std::size_t n = walk.n();
  if (L < 1) throw UsageError("dyadic decomposition needs L >= 1");
  if (L > 40 || (std::size_t{1} << L) > n) throw UsageError("dyadic decomposition needs 2^L <= n");
  DyadicRecord rec;
  rec.n = n;
  rec.L = L;
  rec.capTotal = capacity(range_of(walk, 0, n));

  DyadicLevel top;
  top.level = 0;
  top.bounds = {0, n};
  rec.levels.push_back(top);
  for (int l = 1; l <= L; ++l) {
    const auto& prev = rec.levels.back().bounds;
    DyadicLevel lev;
    lev.level = l;
    lev.bounds.push_back(0);
    for (std::size_t i = 0; i + 1 < prev.size(); ++i) {
      const std::size_t a = prev[i], b = prev[i + 1];
      lev.bounds.push_back(a + (b - a) / 2);
      lev.bounds.push_back(b);
    }
    for (std::size_t i = 0; i + 1 < lev.bounds.size(); i += 2) {
      const PointSet left = range_of(walk, lev.bounds[i], lev.bounds[i + 1]);
      const PointSet right = range_of(walk, lev.bounds[i + 1], lev.bounds[i + 2]);
      lev.crossSum += chi_C(left, right);
    }
    rec.crossSum += lev.crossSum;
    rec.levels.push_back(std::move(lev));
  }
  auto& finest = rec.levels.back();
  for (std::size_t i = 0; i + 1 < finest.bounds.size(); ++i) {
    finest.caps.push_back(capacity(range_of(walk, finest.bounds[i], finest.bounds[i + 1])));
    rec.pieceSum += finest.caps.back();
  }
  rec.residual = std::abs(rec.capTotal - rec.pieceSum + rec.crossSum);
  return rec;
}

}  // namespace walkcap
