#pragma once

// Shared helpers for the unit tests; none of this is used by the library.

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "neuralcsa/flow/conditional_flow.hpp"

namespace ncsa::testing {

/// Identity-initialized flow with every parameter perturbed by N(0, scale^2).
inline flow::ConditionalFlow random_flow(const flow::FlowConfig& config, std::uint64_t seed, double scale) {
  const flow::ConditionalFlow base = flow::ConditionalFlow::identity(config, seed);
  std::vector<double> p(base.parameters().begin(), base.parameters().end());
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, scale);
  for (double& v : p) v += noise(rng);
  return {config, std::move(p)};
}

/// Trapezoid CDF of a 1-D density sampled on an equispaced grid.
inline std::vector<double> cumulative_trapezoid(std::span<const double> density, double step) {
  std::vector<double> cdf(density.size(), 0.0);
  for (std::size_t i = 1; i < density.size(); ++i) {
    cdf[i] = cdf[i - 1] + 0.5 * step * (density[i - 1] + density[i]);
  }
  return cdf;
}

/// Kolmogorov-Smirnov distance between a sample and a CDF callable.
template <class Cdf>
double ks_distance(std::vector<double> sample, Cdf cdf) {
  std::sort(sample.begin(), sample.end());
  const auto n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
    d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace ncsa::testing
