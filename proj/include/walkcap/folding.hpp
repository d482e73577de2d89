#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "walkcap/lattice.hpp"

namespace walkcap {

// K_n(r, rho) = {k <= n : l_n(Q(S_k, ceil r)) >= rho r^d}
std::vector<std::size_t> k_set(const Walk& walk, double r, double rho);
std::vector<std::size_t> k_set(const Walk& walk, const OccupancyIndex& index, double r, double rho);

enum class LadderVariant { Auto, HighDim, FiveDim };

struct LadderLevel {
  int i = 0;
  double rho = 0;
  double r = 0;             // real radius with rho r^{d-2} = C0 log n
  std::int64_t side = 0;    // ceil(r), used for indexing
  double threshold = 0;     // rho r^d
  double L = 0;
};

struct ScaleLadder {
  int d = 5;
  std::size_t n = 0;
  double zeta = 0;
  double C0 = 2;
  double rhoBar = 0;
  int M = 0;  // levels run over -M..N
  int N = 0;
  // densities grow with i (five-dimensional ladder) or shrink with i (d >= 7)
  bool increasing = false;
  std::vector<LadderLevel> levels;  // ordered by i, from -M to N
  std::vector<std::string> warnings;

  const LadderLevel& level(int i) const;
};

// d = 6 is refused unless allowD6, in which case the d >= 7 formulas are used
ScaleLadder ladder(int d, std::size_t n, double zeta, double C0 = 2.0, LadderVariant variant = LadderVariant::Auto,
                   bool allowD6 = false);

struct FoldProfile {
  std::vector<int> index;                 // ladder index i of each entry below
  std::vector<std::size_t> perLevel;      // |K^_i|
  std::vector<std::size_t> rawLevel;      // |K_n(r_i, rho_i)| before disjointification
  std::vector<std::vector<std::size_t>> kSets;  // filled when requested
  std::size_t residual = 0;               // times in no level
  std::size_t total = 0;                  // n + 1

  std::size_t at(int i) const;
};

FoldProfile fold_profile(const Walk& walk, const ScaleLadder& ladder, bool keepSets = false);

// E(A, delta, I) of the ladder; for d >= 7 the levels below -I are included with bound A L_i
bool event_E(const FoldProfile& profile, const ScaleLadder& ladder, double A, double delta, int I);
// some |i| <= I with |K^_i| >= delta L_i
bool detector_fires(const FoldProfile& profile, const ScaleLadder& ladder, double delta, int I);

struct ScenarioStats {
  double rhoTyp = 0;
  double tauTyp = 0;
  double r = 0;
  std::int64_t side = 0;
  double threshold = 0;       // beta rho_typ r^d
  std::size_t cubes = 0;
  std::size_t localTime = 0;  // l_n(V_n)
  std::size_t volume = 0;     // |V_n|
  double cap = 0;             // Cap(V_n), computed on its inner boundary
  double ratio = 0;           // Cap(V_n) / |V_n|^{1-2/d}
  bool empty = true;
  bool capSkipped = false;    // inner boundary above the solver cap
};

ScenarioStats scenario_stats(const Walk& walk, double zeta, double beta, double C0 = 2.0,
                             std::size_t maxBoundary = 8192);

// centers x in side Z^d with Q(x, side) containing p
Point aligned_center(const Point& p, std::int64_t side);
// inner boundary of a union of aligned cubes given by their centers
PointSet cube_union_boundary(const std::vector<Point>& centers, std::int64_t side);

}  // namespace walkcap
