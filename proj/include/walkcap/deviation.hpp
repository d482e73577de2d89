#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "walkcap/lattice.hpp"

namespace walkcap {

struct StrategyPlan {
  int d = 5;
  std::size_t n = 0;
  double zeta = 0;
  bool known = true;        // false for d = 6
  std::string note;
  std::size_t tau = 0;      // confinement duration
  std::int64_t R = 0;       // confinement radius
  double R2 = 0;
  double predictedExponent = 0;  // tau / R^2, up to constants
  double balance = 0;            // tau^2 / R^{d-2}, close to zeta
  std::int64_t box_side() const { return 2 * R + 1; }
};

StrategyPlan plan_strategy(int d, std::size_t n, double zeta);

// principal Dirichlet eigenvalue of the walk killed outside a box of side L
double box_survival_rate(std::int64_t L, int d);

struct PowerIteration {
  double lambda = 0;
  std::size_t iterations = 0;
  double change = 0;
};
// power iteration with Rayleigh quotient on the lazy killed kernel (I + P) / 2
PowerIteration box_survival_power(std::int64_t L, int d, double tol = 1e-13, std::size_t maxIter = 200000);

// box Q(0, L); coordinates in [lo, lo + L - 1] with lo = -floor(L/2)
bool in_box(const Point& p, std::int64_t L);

// P(S_k in Q(L) for all k <= m), m = 0..n, by splitting steps among coordinates
std::vector<double> survival_curve(std::size_t n, std::int64_t L, const Point& start);
// same through the full transfer matrix on the box (small L only)
std::vector<double> survival_transfer(std::size_t n, std::int64_t L, const Point& start);

enum class ConfineSampler { Rejection, Conditioned };

struct ConfineResult {
  std::optional<Walk> walk;
  std::size_t attempts = 0;
  std::size_t rejected = 0;
  bool approximate = false;  // conditioned sampler: law is the eigenfunction tilt, not exact conditioning
};

// walk of n steps kept in Q(L) during the first `confined` steps (all of them when confined >= n)
ConfineResult confine_sample(std::size_t n, std::int64_t L, std::uint64_t seed, int d,
                             ConfineSampler sampler = ConfineSampler::Rejection, std::size_t maxAttempts = 1000000,
                             std::size_t confined = static_cast<std::size_t>(-1));

// capacities Cap(R_n) for seeds derive_seed(seed, i), i < count
std::vector<double> free_capacities(std::size_t n, int d, std::uint64_t seed, std::size_t count);

struct DeviationEstimate {
  double estimate = 0;
  double stdError = 0;
  double lo = 0;  // Wilson interval
  double hi = 0;
  std::size_t events = 0;
  std::size_t samples = 0;
  double mean = 0;  // centering, from an independent seed block
  double meanStdError = 0;
  bool oneSided = false;  // no event seen: hi is a one-sided bound
};

// frequency of Cap(R_n) - E Cap(R_n) <= -zeta
DeviationEstimate deviation_prob_mc(std::size_t n, double zeta, std::size_t samples, int d, std::uint64_t seed,
                                    std::size_t meanSamples = 0);

struct PolymerEstimate {
  double estimate = 0;
  double stdError = 0;
  double mean = 0;
  std::size_t samples = 0;
};

// E exp(-u n^{-2/(d-2)} (Cap(R_n) - mean)), mean from an independent seed block
PolymerEstimate polymer_Z(std::size_t n, double u, std::size_t samples, int d, std::uint64_t seed,
                          std::size_t meanSamples = 0);
PolymerEstimate polymer_Z_from(const std::vector<double>& caps, double mean, std::size_t n, double u, int d);

struct UpwardRecord {
  std::size_t n = 0;
  int d = 5;
  double cn = 0;
  std::string method;  // exhaustive | bruteforce | beam
  std::vector<int> moves;  // witness, move m is axis m/2 with sign - when m is odd
  std::size_t evaluated = 0;

  Walk witness() const;
};

UpwardRecord cn_exact(std::size_t n, int d, std::size_t maxN = 8);
UpwardRecord cn_bruteforce(std::size_t n, int d, std::size_t maxN = 6);
UpwardRecord cn_beam(std::size_t n, int d, std::size_t width, bool noDoubleBacktrack = true);

// even k: gamma(k + 2) != gamma(k)
bool no_double_backtrack(const std::vector<int>& moves);

}  // namespace walkcap
