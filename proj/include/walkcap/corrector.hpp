#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "walkcap/green.hpp"
#include "walkcap/lattice.hpp"

namespace walkcap {

struct CorrectorTrace {
  std::size_t T = 0;
  std::vector<double> perStep;  // sum_{x in R_k} e_{R_k}(x) phi_T(x - S_k), k = 0..n
  double total = 0;
  std::size_t refactorizations = 0;
};

struct CorrectorOptions {
  std::size_t maxN = 2000;
  PhiRange range = PhiRange::ZeroToT;
};

CorrectorTrace xi_n(const Walk& walk, std::size_t T, const CorrectorOptions& opt = {});

// time blocks I_{j,l} = [j + (l-1)T, j + lT] clipped to [0, n]
struct BlockPair {
  std::size_t j = 0;
  std::size_t l = 0;        // left part is [j, j + lT], right part is I_{j,l+1}
  std::size_t split = 0;    // j + lT
  std::size_t end = 0;      // min(j + (l+1)T, n)
};
std::vector<BlockPair> block_pairs(std::size_t n, std::size_t T);

struct ChiTerm {
  BlockPair pair;
  double value = 0;
};

std::vector<ChiTerm> chi_n_terms(const Walk& walk, std::size_t T);
double chi_n(const Walk& walk, std::size_t T);
// (1/T) sum_{j<T} Cap(R[j, min(j + floor(n/T) T, n)])
double block_average_capacity(const Walk& walk, std::size_t T);

struct XiStarEstimate {
  double estimate = 0;
  double stdError = 0;
  std::size_t terms = 0;
  std::size_t inner = 0;
};

XiStarEstimate xi_star_mc(const Walk& walk, std::size_t T, std::size_t inner, std::uint64_t seed);

}  // namespace walkcap
