#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace walkcap {

// running moments; merge() is associative so partial sums can be combined in any grouping
struct Moments {
  std::size_t count = 0;
  double mean = 0;
  double m2 = 0;

  void add(double x);
  void merge(const Moments& o);
  double variance() const;  // unbiased
  double std_error() const;
};

Moments moments(const std::vector<double>& xs);
double quantile(std::vector<double> xs, double q);

struct Interval {
  double lo = 0;
  double hi = 0;
};

// Wilson score interval for k successes out of n at normal quantile z
Interval wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054);

struct Jackknife {
  double estimate = 0;
  double stdError = 0;
};

// leave-one-out jackknife of a statistic of the sample
Jackknife jackknife(const std::vector<double>& xs, const std::function<double(const std::vector<double>&)>& stat);
// jackknife of the plain mean, O(n)
Jackknife jackknife_mean(const std::vector<double>& xs);

}  // namespace walkcap
