#pragma once

// Binary-treatment process whose full propensity follows an MSM exactly.
//   X ~ U[-1, 1],  pi(x) = 0.25 + 0.5 sigmoid(3x)
//   U | x ~ Bernoulli(((G - 1) pi + 1) / (G + 1))
//   A | x, u ~ Bernoulli(u pi s+ + (1 - u) pi s-),
//     s+ = 1 / ((1 - 1/G) pi + 1/G),  s- = 1 / ((1 - G) pi + G)
//   Y = (2A-1) X + (2A-1) - 2 sin(2 (2A-1) X) - 2 (2U-1)(1 + 0.5 X) + eps,  eps ~ N(0, 1)
// With two outcomes a second coordinate is appended:
//   Y2 = 0.5 (2A-1) - X + (2U-1)(1 - 0.5 X) + eps2,  corr(eps, eps2) = 0.5.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <json.hpp>

#include "neuralcsa/data/dataset.hpp"
#include "neuralcsa/datagen/ground_truth.hpp"
#include "neuralcsa/datagen/oracle.hpp"
#include "neuralcsa/error.hpp"

namespace ncsa::datagen {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline std::vector<double> linear_grid(double lo, double hi, int points) {
  require(points >= 2, ErrorCode::invalid_argument, "grid: need at least two points");
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (points - 1);
  return g;
}

struct BinaryDgp {
  std::size_t n = 10000;
  double gamma = 2.0;
  int outcomes = 1;
  int grid_points = 101;
  std::uint64_t seed = 0;

  void validate() const {
    require(std::isfinite(gamma) && gamma >= 1.0, ErrorCode::invalid_argument,
            "binary process: gamma must be >= 1, got " + std::to_string(gamma));
    require(n >= 1 && (outcomes == 1 || outcomes == 2) && grid_points >= 2, ErrorCode::invalid_argument,
            "binary process: need n >= 1, outcomes in {1, 2}, grid_points >= 2");
  }

  [[nodiscard]] static double propensity(double x) { return 0.25 + 0.5 * sigmoid(3.0 * x); }

  [[nodiscard]] double latent_probability(double x) const {
    return ((gamma - 1.0) * propensity(x) + 1.0) / (gamma + 1.0);
  }

  /// P(A = 1 | x, u).
  [[nodiscard]] double full_propensity(double x, int u) const {
    const double pi = propensity(x);
    const double s_plus = 1.0 / ((1.0 - 1.0 / gamma) * pi + 1.0 / gamma);
    const double s_minus = 1.0 / ((1.0 - gamma) * pi + gamma);
    return u == 1 ? pi * s_plus : pi * s_minus;
  }

  [[nodiscard]] static double outcome_mean(double x, double a, double u) {
    const double s = 2.0 * a - 1.0;
    return s * x + s - 2.0 * std::sin(2.0 * s * x) - 2.0 * (2.0 * u - 1.0) * (1.0 + 0.5 * x);
  }

  [[nodiscard]] static double second_outcome_mean(double x, double a, double u) {
    return 0.5 * (2.0 * a - 1.0) - x + (2.0 * u - 1.0) * (1.0 - 0.5 * x);
  }

  /// E[Y(a) | x]: U keeps its x-conditional law under intervention.
  [[nodiscard]] double truth(double x, double a) const {
    return outcome_mean(x, a, latent_probability(x));
  }

  [[nodiscard]] LatentMasses latent(double x, double a) const {
    const double pu = latent_probability(x);
    const double pi_a = a == 1.0 ? propensity(x) : 1.0 - propensity(x);
    LatentMasses m{{1.0 - pu, pu}, {0.0, 0.0}, pi_a};
    for (int u = 0; u < 2; ++u) {
      const double pa = a == 1.0 ? full_propensity(x, u) : 1.0 - full_propensity(x, u);
      m.p_xa[static_cast<std::size_t>(u)] = pa * m.p_x[static_cast<std::size_t>(u)] / pi_a;
    }
    return m;
  }
};

inline BinaryDgp binary_dgp_from_json(const nlohmann::json& j) {
  BinaryDgp d;
  d.n = j.value("n", d.n);
  d.gamma = j.value("gamma", d.gamma);
  d.outcomes = j.value("outcomes", d.outcomes);
  d.grid_points = j.value("grid_points", d.grid_points);
  d.seed = j.value("seed", d.seed);
  d.validate();
  return d;
}

inline nlohmann::json to_json(const BinaryDgp& d) {
  return {{"n", d.n}, {"gamma", d.gamma}, {"outcomes", d.outcomes}, {"grid_points", d.grid_points}, {"seed", d.seed}};
}

/// `latent`, when given, receives the hidden U of every row.
inline data::Dataset sample_binary(const BinaryDgp& d, std::vector<double>* latent = nullptr) {
  d.validate();
  if (latent != nullptr) latent->assign(d.n, 0.0);
  data::Dataset ds{Matrix(d.n, 1), std::vector<double>(d.n), Matrix(d.n, static_cast<std::size_t>(d.outcomes))};
  std::mt19937_64 rng(d.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < d.n; ++i) {
    const double x = unif(rng);
    const int u = coin(rng) < d.latent_probability(x) ? 1 : 0;
    if (latent != nullptr) (*latent)[i] = u;
    const double a = coin(rng) < d.full_propensity(x, u) ? 1.0 : 0.0;
    const double e1 = normal(rng);
    ds.x(i, 0) = x;
    ds.a[i] = a;
    ds.y(i, 0) = BinaryDgp::outcome_mean(x, a, u) + e1;
    if (d.outcomes == 2) {
      const double e2 = 0.5 * e1 + std::sqrt(0.75) * normal(rng);
      ds.y(i, 1) = BinaryDgp::second_outcome_mean(x, a, u) + e2;
    }
  }
  return ds;
}

/// Ground truth on the x grid for both arms; Gamma* summarized by the max over points.
inline GroundTruth binary_ground_truth(const BinaryDgp& d) {
  d.validate();
  GroundTruth g{"binary", to_json(d), {}, {}};
  const auto models = standard_models(true);
  OracleSummary summary{std::nullopt, "max", {}};
  std::size_t unit = 0;
  for (double x : linear_grid(-1.0, 1.0, d.grid_points)) {
    for (double a : {0.0, 1.0}) {
      TruthPoint p{unit, {x}, a, d.truth(x, a), true, {}};
      const LatentMasses m = d.latent(x, a);
      for (const auto& spec : models) {
        const double v = oracle_gamma(spec, m);
        p.oracle_gamma[spec.label()] = v;
        auto [it, fresh] = summary.gamma.emplace(spec.label(), v);
        if (!fresh) it->second = std::max(it->second, v);
      }
      g.points.push_back(std::move(p));
    }
    ++unit;
  }
  g.summaries.push_back(std::move(summary));
  return g;
}

inline Generated generate_binary(const BinaryDgp& d) { return {sample_binary(d), binary_ground_truth(d)}; }

}  // namespace ncsa::datagen
