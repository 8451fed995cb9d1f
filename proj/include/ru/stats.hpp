#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace ru {

/// Monte Carlo estimate: sample mean with its standard error.
struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

/// Pairwise summation. The summation tree depends only on the input length,
/// so results are reproducible regardless of how the inputs were produced.
inline double pairwise_sum(std::span<const double> x) {
  constexpr std::size_t kBlock = 64;
  if (x.size() <= kBlock) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

inline McEstimate estimate(std::span<const double> samples) {
  McEstimate e;
  e.n = samples.size();
  if (e.n == 0) return e;
  e.mean = pairwise_sum(samples) / static_cast<double>(e.n);
  if (e.n < 2) return e;
  std::vector<double> sq(e.n);
  for (std::size_t i = 0; i < e.n; ++i) {
    const double c = samples[i] - e.mean;
    sq[i] = c * c;
  }
  const double var = pairwise_sum(sq) / static_cast<double>(e.n - 1);
  e.std_error = std::sqrt(var / static_cast<double>(e.n));
  return e;
}

/// Estimate of E[a - b] from paired samples (common random numbers).
inline McEstimate paired_difference(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_difference: size mismatch");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return estimate(d);
}

/// Signed distance of an estimate from `target` in standard errors. Zero when
/// both the deviation and the standard error vanish.
inline double z_score(const McEstimate& e, double target) {
  const double dev = e.mean - target;
  if (e.std_error == 0.0) return dev == 0.0 ? 0.0 : (dev > 0 ? INFINITY : -INFINITY);
  return dev / e.std_error;
}

}  // namespace ru
