#pragma once

#include <cstddef>
#include <vector>

#include "walkcap/capacity.hpp"
#include "walkcap/lattice.hpp"

namespace walkcap {

struct CrossTermReport {
  double chiC = 0;      // Cap A + Cap B - Cap(A ∪ B)
  double chiAB = 0;     // sum_{x in A, y in B} e_{A∪B}(x) G(x-y) e_B(y)
  double chiBA = 0;
  double chiBar = 0;    // sum_{x in A, y in B} e_A(x) G(x-y)
  double chiTilde = 0;  // sum_{x in A, y in B} e_A(x) G(x-y) e_B(y)
  double gammaAB = 0;   // sum_{x in A, y in B} G(y-x) e_B(y)
  double chiZero = 0;   // chiAB restricted to x in A \ B
  double epsilon = 0;   // chiAB + chiBA - chiC
  double capA = 0;
  double capB = 0;
  double capUnion = 0;
  double capIntersection = 0;
};

double chi_C(const PointSet& A, const PointSet& B);
double chi(const PointSet& A, const PointSet& B);
double gamma_cross(const PointSet& A, const PointSet& B);
CrossTermReport chi_variants(const PointSet& A, const PointSet& B);

struct DyadicLevel {
  int level = 0;
  std::vector<std::size_t> bounds;  // piece i covers times [bounds[i], bounds[i+1]]
  std::vector<double> caps;
  double crossSum = 0;              // sum over sibling pairs at this level
};

struct DyadicRecord {
  std::size_t n = 0;
  int L = 0;
  double capTotal = 0;
  double pieceSum = 0;  // sum of Cap over the 2^L finest pieces
  double crossSum = 0;  // sum over all levels of the sibling cross terms
  double residual = 0;  // |capTotal - pieceSum + crossSum|
  std::vector<DyadicLevel> levels;  // levels[0] is the whole range
  std::vector<std::size_t> piece_lengths() const;
};

DyadicRecord dyadic_decompose(const Walk& walk, int L);

}  // namespace walkcap
