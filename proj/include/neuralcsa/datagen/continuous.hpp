#pragma once

// Continuous-treatment process (not an exact CMSM).
//   X ~ U[-1, 1],  U ~ Bernoulli(0.5) independent of X
//   A | x, u ~ Beta(alpha, alpha),  alpha = 2 + x + gamma (u - 0.5)
//   Y = A + X exp(-X A) - 0.5 (U - 0.5) X + (0.5 X + 1) + eps,  eps ~ N(0, 1)
//
// Gamma* uses P(u | x, a) averaged over histogram cells in (x, a) with
// Scott-rule widths for the configured sample size. Cell masses are
// integrated exactly by quadrature instead of counted, so the oracle is
// deterministic. Pointwise, alpha -> 0 as x -> -1 for u = 0, which drives
// Gamma*(x, a) to infinity there; the cell average stays finite.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <json.hpp>

#include "neuralcsa/data/dataset.hpp"
#include "neuralcsa/datagen/binary.hpp"
#include "neuralcsa/datagen/ground_truth.hpp"
#include "neuralcsa/datagen/oracle.hpp"
#include "neuralcsa/error.hpp"

namespace ncsa::datagen {

inline double beta_density(double a, double alpha, double beta) {
  require(alpha > 0.0 && beta > 0.0, ErrorCode::positivity, "beta density: shape parameters must be positive");
  if (a <= 0.0 || a >= 1.0) return 0.0;
  const double log_b = std::lgamma(alpha) + std::lgamma(beta) - std::lgamma(alpha + beta);
  return std::exp((alpha - 1.0) * std::log(a) + (beta - 1.0) * std::log1p(-a) - log_b);
}

struct ContinuousDgp {
  std::size_t n = 10000;
  double gamma = 2.0;
  int grid_points = 101;
  std::vector<double> a_levels = {0.1, 0.5, 0.9};
  int quadrature_nodes = 64;  // per cell side
  std::uint64_t seed = 0;

  void validate() const {
    require(std::isfinite(gamma) && 1.0 - 0.5 * std::fabs(gamma) >= 0.0, ErrorCode::invalid_argument,
            "continuous process: |gamma| > 2 makes a Beta shape parameter non-positive on x in (-1, 1]");
    require(n >= 2 && grid_points >= 2 && quadrature_nodes >= 2 && !a_levels.empty(), ErrorCode::invalid_argument,
            "continuous process: need n >= 2, grid_points >= 2, quadrature_nodes >= 2 and a treatment level");
    for (double a : a_levels) {
      require(a > 0.0 && a < 1.0, ErrorCode::invalid_argument, "continuous process: treatment levels must lie in (0, 1)");
    }
  }

  [[nodiscard]] double alpha(double x, int u) const { return 2.0 + x + gamma * (u - 0.5); }

  [[nodiscard]] static double outcome_mean(double x, double a, double u) {
    return a + x * std::exp(-x * a) - 0.5 * (u - 0.5) * x + (0.5 * x + 1.0);
  }

  /// E[Y(a) | x]; the U term has mean zero.
  [[nodiscard]] static double truth(double x, double a) { return outcome_mean(x, a, 0.5); }

  /// Density of A given (x, u).
  [[nodiscard]] double treatment_density(double a, double x, int u) const {
    const double s = alpha(x, u);
    return beta_density(a, s, s);
  }

  /// Pointwise latent law at (x, a); fails where a Beta shape parameter is 0.
  [[nodiscard]] LatentMasses latent_point(double x, double a) const {
    LatentMasses m{{0.5, 0.5}, {0.0, 0.0}, std::nullopt};
    const double d0 = treatment_density(a, x, 0);
    const double d1 = treatment_density(a, x, 1);
    require(d0 + d1 > 0.0, ErrorCode::positivity, "continuous process: P(a | x) = 0");
    m.p_xa = {d0 / (d0 + d1), d1 / (d0 + d1)};
    return m;
  }

  /// Scott-rule histogram widths for x and a at sample size n.
  [[nodiscard]] std::pair<double, double> bin_widths() const {
    const double scale = 3.49 * std::cbrt(1.0 / static_cast<double>(n));
    const double sd_x = 2.0 / std::sqrt(12.0);
    // Var(A) = E[1 / (4 (2 alpha + 1))]: Beta(alpha, alpha) has mean 1/2 everywhere.
    double var = 0.0;
    const int nodes = 1000;
    for (int i = 0; i < nodes; ++i) {
      const double x = -1.0 + 2.0 * (i + 0.5) / nodes;
      for (int u = 0; u < 2; ++u) var += 0.5 / nodes / (4.0 * (2.0 * alpha(x, u) + 1.0));
    }
    return {scale * sd_x, scale * std::sqrt(var)};
  }

  /// Latent law averaged over the histogram cell that contains (x, a).
  [[nodiscard]] LatentMasses latent_binned(double x, double a) const {
    const auto [hx, ha] = bin_widths();
    const double cx = std::min(std::floor((x + 1.0) / hx), std::ceil(2.0 / hx) - 1.0);
    const double ca = std::min(std::floor(a / ha), std::ceil(1.0 / ha) - 1.0);
    return cell_masses(-1.0 + cx * hx, std::min(1.0, -1.0 + (cx + 1.0) * hx), ca * ha, std::min(1.0, (ca + 1.0) * ha));
  }

  [[nodiscard]] LatentMasses cell_masses(double x0, double x1, double a0, double a1) const {
    LatentMasses m{{0.5, 0.5}, {0.0, 0.0}, std::nullopt};
    const int q = quadrature_nodes;
    for (int i = 0; i < q; ++i) {
      const double x = x0 + (x1 - x0) * (i + 0.5) / q;
      for (int j = 0; j < q; ++j) {
        const double a = a0 + (a1 - a0) * (j + 0.5) / q;
        for (int u = 0; u < 2; ++u) m.p_xa[static_cast<std::size_t>(u)] += treatment_density(a, x, u);
      }
    }
    const double total = m.p_xa[0] + m.p_xa[1];
    require(total > 0.0, ErrorCode::positivity, "continuous process: empty histogram cell");
    m.p_xa = {m.p_xa[0] / total, m.p_xa[1] / total};
    return m;
  }

  /// x-cells covering [-1, 1] as (lo, hi) pairs.
  [[nodiscard]] std::vector<std::pair<double, double>> x_cells() const {
    const double hx = bin_widths().first;
    std::vector<std::pair<double, double>> out;
    for (double lo = -1.0; lo < 1.0 - 1e-12; lo += hx) out.emplace_back(lo, std::min(1.0, lo + hx));
    return out;
  }
};

inline ContinuousDgp continuous_dgp_from_json(const nlohmann::json& j) {
  ContinuousDgp d;
  d.n = j.value("n", d.n);
  d.gamma = j.value("gamma", d.gamma);
  d.grid_points = j.value("grid_points", d.grid_points);
  d.a_levels = j.value("a_levels", d.a_levels);
  d.quadrature_nodes = j.value("quadrature_nodes", d.quadrature_nodes);
  d.seed = j.value("seed", d.seed);
  d.validate();
  return d;
}

inline nlohmann::json to_json(const ContinuousDgp& d) {
  return {{"n", d.n},
          {"gamma", d.gamma},
          {"grid_points", d.grid_points},
          {"a_levels", d.a_levels},
          {"quadrature_nodes", d.quadrature_nodes},
          {"seed", d.seed}};
}

/// `latent`, when given, receives the hidden U of every row.
inline data::Dataset sample_continuous(const ContinuousDgp& d, std::vector<double>* latent = nullptr) {
  d.validate();
  if (latent != nullptr) latent->assign(d.n, 0.0);
  data::Dataset ds{Matrix(d.n, 1), std::vector<double>(d.n), Matrix(d.n, 1)};
  std::mt19937_64 rng(d.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < d.n; ++i) {
    const double x = unif(rng);
    const int u = coin(rng) ? 1 : 0;
    if (latent != nullptr) (*latent)[i] = u;
    const double s = d.alpha(x, u);
    require(s > 0.0, ErrorCode::positivity, [&] { return "continuous process: non-positive Beta shape at x = " + std::to_string(x); });
    // Beta(s, s) as G1 / (G1 + G2) with independent Gamma(s, 1) draws, in log space:
    // log Gamma(s) = log Gamma(s + 1) + log(V) / s keeps small shapes from underflowing to 0 / 0.
    std::gamma_distribution<double> g(s + 1.0, 1.0);
    std::uniform_real_distribution<double> v(0.0, 1.0);
    const auto log_gamma_draw = [&] { return std::log(g(rng)) + std::log1p(-v(rng)) / s; };
    const double l1 = log_gamma_draw();
    const double l2 = log_gamma_draw();
    const double a = 1.0 / (1.0 + std::exp(l2 - l1));
    ds.x(i, 0) = x;
    ds.a[i] = a;
    ds.y(i, 0) = ContinuousDgp::outcome_mean(x, a, u) + normal(rng);
  }
  return ds;
}

/// Ground truth on the x grid at each treatment level; Gamma*(a) is the
/// x-average of the cell-level Gamma*(x, a) under X ~ U[-1, 1].
inline GroundTruth continuous_ground_truth(const ContinuousDgp& d) {
  d.validate();
  GroundTruth g{"continuous", to_json(d), {}, {}};
  const auto models = standard_models(false);
  const auto [hx, ha] = d.bin_widths();
  for (double a : d.a_levels) {
    std::size_t unit = 0;
    for (double x : linear_grid(-1.0, 1.0, d.grid_points)) {
      TruthPoint p{unit++, {x}, a, ContinuousDgp::truth(x, a), true, {}};
      const LatentMasses m = d.latent_binned(x, a);
      for (const auto& spec : models) p.oracle_gamma[spec.label()] = oracle_gamma(spec, m);
      g.points.push_back(std::move(p));
    }
    OracleSummary s{a, "x_average", {}};
    const double ca = std::min(std::floor(a / ha), std::ceil(1.0 / ha) - 1.0);
    const double a0 = ca * ha;
    const double a1 = std::min(1.0, a0 + ha);
    for (const auto& [x0, x1] : d.x_cells()) {
      const LatentMasses m = d.cell_masses(x0, x1, a0, a1);
      for (const auto& spec : models) s.gamma[spec.label()] += 0.5 * (x1 - x0) * oracle_gamma(spec, m);
    }
    g.summaries.push_back(std::move(s));
  }
  return g;
}

inline Generated generate_continuous(const ContinuousDgp& d) {
  return {sample_continuous(d), continuous_ground_truth(d)};
}

}  // namespace ncsa::datagen
