#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace landcover {

inline double sample_mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

inline double sample_variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double mu = sample_mean(x);
  double s = 0.0;
  for (double v : x) s += (v - mu) * (v - mu);
  return s / static_cast<double>(x.size() - 1);
}

// Effective sample size with Geyer's initial monotone positive sequence.
inline double effective_sample_size(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) return static_cast<double>(n);
  const double mu = sample_mean(x);
  double c0 = 0.0;
  for (double v : x) c0 += (v - mu) * (v - mu);
  c0 /= static_cast<double>(n);
  if (!(c0 > 0.0)) return static_cast<double>(n);

  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) s += (x[t] - mu) * (x[t + lag] - mu);
    return s / static_cast<double>(n);
  };

  double tau = -1.0;  // -rho_0 offsets the doubled lag-0 term
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t lag = 0; lag + 1 < n; lag += 2) {
    double pair = (autocov(lag) + autocov(lag + 1)) / c0;
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(n)));
  return static_cast<double>(n) / tau;
}

// Monte Carlo standard error of the mean by non-overlapping batch means.
inline double batch_means_standard_error(std::span<const double> x, std::size_t batches = 50) {
  const std::size_t n = x.size();
  if (n < 2 * batches) return std::sqrt(sample_variance(x) / static_cast<double>(std::max<std::size_t>(n, 1)));
  const std::size_t len = n / batches;
  std::vector<double> means(batches);
  for (std::size_t b = 0; b < batches; ++b) means[b] = sample_mean(x.subspan(b * len, len));
  return std::sqrt(sample_variance(means) / static_cast<double>(batches));
}

}  // namespace landcover
