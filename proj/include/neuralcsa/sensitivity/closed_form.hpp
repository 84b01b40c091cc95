#pragma once

// Sharp MSM bound on E[Y(a) | x] by step reweighting of the Stage-1 density.
//
// Upper bound: weight l = pi + (1 - pi) / Gamma below the tau = Gamma / (1 + Gamma)
// quantile of P(Y | x, a) and h = pi + (1 - pi) Gamma above it. Lower bound: h
// below the 1 / (1 + Gamma) quantile and l above. Both satisfy
// l F(t) + h (1 - F(t)) = 1. Continuous treatments use pi = 0.

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "neuralcsa/direction.hpp"
#include "neuralcsa/error.hpp"
#include "neuralcsa/observational/stage1.hpp"

namespace ncsa::sensitivity {

struct QuadratureConfig {
  double lo = -12.0;  // standardized outcome units
  double hi = 12.0;
  int cells = 6000;
};

struct StepWeights {
  double low;     // weight below the cutoff
  double high;    // weight above the cutoff
  double cutoff;  // CDF level of the cutoff
};

inline StepWeights msm_step_weights(double gamma, double pi, Direction dir) {
  require(gamma >= 1.0, ErrorCode::invalid_argument, "closed form: gamma must be >= 1");
  require(pi >= 0.0 && pi < 1.0, ErrorCode::positivity, "closed form: propensity must lie in [0, 1)");
  const double l = pi + (1.0 - pi) / gamma;
  const double h = pi + (1.0 - pi) * gamma;
  if (dir == Direction::upper) return {l, h, gamma / (1.0 + gamma)};
  return {h, l, 1.0 / (1.0 + gamma)};
}

/// Step-reweighted mean of a 1-D density sampled on an equispaced grid of `cells` cells.
inline double step_reweighted_mean(std::span<const double> grid, std::span<const double> density, const StepWeights& w) {
  const std::size_t cells = grid.size() - 1;
  std::vector<double> mass(cells);
  std::vector<double> first(cells);  // integral of y p(y) over the cell
  double total = 0.0;
  for (std::size_t i = 0; i < cells; ++i) {
    const double dz = grid[i + 1] - grid[i];
    mass[i] = 0.5 * dz * (density[i] + density[i + 1]);
    first[i] = 0.5 * dz * (grid[i] * density[i] + grid[i + 1] * density[i + 1]);
    total += mass[i];
  }
  require(total >= 0.99 && total <= 1.01, ErrorCode::quadrature,
          "closed form: density mass on the quadrature grid is " + std::to_string(total) + ", outside [0.99, 1.01]");
  double cdf = 0.0;
  double result = 0.0;
  for (std::size_t i = 0; i < cells; ++i) {
    const double m = mass[i] / total;
    const double f = first[i] / total;
    if (cdf + m <= w.cutoff) {
      result += w.low * f;
    } else if (cdf >= w.cutoff) {
      result += w.high * f;
    } else {
      // Cell straddles the cutoff: split its mass proportionally.
      const double below = (w.cutoff - cdf) / m;
      result += (w.low * below + w.high * (1.0 - below)) * f;
    }
    cdf += m;
  }
  return result;
}

/// Closed-form MSM bound in original outcome units. `pi` is P(a | x) for
/// binary treatments and empty for continuous ones.
inline double closed_form_msm_bound(const observational::Stage1Model& stage1, std::span<const double> x, double a,
                                    double gamma, Direction dir, std::optional<double> pi,
                                    const QuadratureConfig& quad = {}) {
  require(stage1.d_y() == 1, ErrorCode::dimension_mismatch, "closed form: needs a single outcome dimension");
  require(quad.cells >= 10 && quad.hi > quad.lo, ErrorCode::invalid_argument, "closed form: bad quadrature grid");
  if (pi) {
    require(*pi > 0.0 && *pi < 1.0, ErrorCode::positivity, "closed form: propensity must lie in (0, 1)");
  }
  const StepWeights w = msm_step_weights(gamma, pi.value_or(0.0), dir);
  const auto n = static_cast<std::size_t>(quad.cells) + 1;
  std::vector<double> grid(n);
  std::vector<double> density(n);
  const std::vector<double> ctx = flow::make_context(x, a);
  const flow::FlowAtContext<double> f = stage1.flow.at(ctx);
  const double step = (quad.hi - quad.lo) / quad.cells;
  for (std::size_t i = 0; i < n; ++i) {
    grid[i] = quad.lo + static_cast<double>(i) * step;
    const double z = grid[i];
    density[i] = std::exp(f.log_prob(std::span<const double>(&z, 1)));
  }
  const double z_bound = step_reweighted_mean(grid, density, w);
  return stage1.outcome.to_original(z_bound, 0);
}

}  // namespace ncsa::sensitivity
