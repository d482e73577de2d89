#include "walkcap/stats.hpp"

#include <algorithm>
#include <cmath>

#include "walkcap/errors.hpp"

namespace walkcap {

void Moments::add(double x) {
  ++count;
  const double delta = x - mean;
  mean += delta / static_cast<double>(count);
  m2 += delta * (x - mean);
}

void Moments::merge(const Moments& o) {
  if (o.count == 0) return;
  if (count == 0) {
    *this = o;
    return;
  }
  const double n1 = static_cast<double>(count), n2 = static_cast<double>(o.count);
  const double delta = o.mean - mean;
  const double n = n1 + n2;
  mean += delta * n2 / n;
  m2 += o.m2 + delta * delta * n1 * n2 / n;
  count += o.count;
}

double Moments::variance() const { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }

double Moments::std_error() const { return count > 1 ? std::sqrt(variance() / static_cast<double>(count)) : 0.0; }

Moments moments(const std::vector<double>& xs) {
  Moments m;
  for (double x : xs) m.add(x);
  return m;
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw UsageError("quantile of an empty sample");
  if (!(q >= 0 && q <= 1)) throw UsageError("quantile level must lie in [0, 1]");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double f = pos - static_cast<double>(i);
  if (i + 1 >= xs.size()) return xs.back();
  return xs[i] + f * (xs[i + 1] - xs[i]);
}

Interval wilson_interval(std::size_t k, std::size_t n, double z) {
  if (n == 0) return {0, 1};
  const double nd = static_cast<double>(n);
  const double p = static_cast<double>(k) / nd;
  const double z2 = z * z;
  const double denom = 1 + z2 / nd;
  const double center = (p + z2 / (2 * nd)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / nd + z2 / (4 * nd * nd)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

Jackknife jackknife(const std::vector<double>& xs, const std::function<double(const std::vector<double>&)>& stat) {
  const std::size_t n = xs.size();
  Jackknife out;
  out.estimate = stat(xs);
  if (n < 2) return out;
  std::vector<double> sub(n - 1);
  std::vector<double> loo(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t q = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sub[q++] = xs[j];
    loo[i] = stat(sub);
  }
  double mean = 0;
  for (double v : loo) mean += v;
  mean /= static_cast<double>(n);
  double s = 0;
  for (double v : loo) s += (v - mean) * (v - mean);
  out.stdError = std::sqrt(s * static_cast<double>(n - 1) / static_cast<double>(n));
  return out;
}

Jackknife jackknife_mean(const std::vector<double>& xs) {
  const Moments m = moments(xs);
  return {m.mean, m.std_error()};
}

}  // namespace walkcap
