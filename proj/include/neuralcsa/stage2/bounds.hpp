#pragma once

// Bounds at evaluation points from an upper/lower pair of Stage-2 models.
// Both directions share the evaluation seed, so their Monte-Carlo noise is
// common and cancels in the interval length.

#include <cstdint>
#include <optional>
#include <vector>

#include "neuralcsa/error.hpp"
#include "neuralcsa/flow/conditional_flow.hpp"
#include "neuralcsa/observational/propensity.hpp"
#include "neuralcsa/observational/stage1.hpp"
#include "neuralcsa/queries/shifted.hpp"
#include "neuralcsa/sensitivity/estimate.hpp"
#include "neuralcsa/stage2/trainer.hpp"

namespace ncsa::stage2 {

struct EvaluationPoint {
  std::vector<double> x;
  double a = 0.0;
};

struct BoundsResult {
  double lower = 0.0;
  double upper = 0.0;
  double lower_se = 0.0;
  double upper_se = 0.0;
  double d_lower = 0.0;  // constraint estimate of the lower model at this point
  double d_upper = 0.0;
};

struct BoundsConfig {
  std::size_t k = 2000;             // samples per query evaluation
  std::size_t constraint_k = 256;   // fresh latent draws per constraint estimate
  std::uint64_t seed = 0;
};

inline void check_pair(const Stage2Model& upper, const Stage2Model& lower) {
  require(upper.spec == lower.spec, ErrorCode::invalid_argument,
          "bounds: upper and lower models were trained for different sensitivity models");
  require(upper.query.same_functional(lower.query), ErrorCode::invalid_argument,
          "bounds: upper and lower models were trained for different queries");
  require(upper.query.direction == Direction::upper && lower.query.direction == Direction::lower,
          ErrorCode::invalid_argument, "bounds: models must be trained for the upper and lower direction");
  require(upper.flow.config() == lower.flow.config(), ErrorCode::dimension_mismatch,
          "bounds: upper and lower flows have different shapes");
}

inline std::vector<BoundsResult> compute_bounds(const observational::Stage1Model& stage1, const Stage2Model& upper,
                                                const Stage2Model& lower, const PropensityFn& propensity,
                                                const std::vector<EvaluationPoint>& points, const BoundsConfig& cfg) {
  check_pair(upper, lower);
  std::vector<BoundsResult> out;
  out.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const EvaluationPoint& p = points[i];
    std::optional<double> pi = propensity(p.x, p.a);
    if (pi) pi = observational::clamp_propensity(*pi);
    const std::uint64_t seed = cfg.seed + i;
    const queries::QueryValue hi = queries::evaluate_query(upper.query, stage1, upper.flow, p.x, p.a, cfg.k, seed, pi);
    const queries::QueryValue lo = queries::evaluate_query(lower.query, stage1, lower.flow, p.x, p.a, cfg.k, seed, pi);
    const Matrix latent = sensitivity::standard_normal_draws(cfg.constraint_k, static_cast<std::size_t>(stage1.d_y()),
                                                             seed ^ 0x5bd1e995ULL);
    const std::vector<double> ctx = flow::make_context(p.x, p.a);
    out.push_back({lo.value, hi.value, lo.std_error, hi.std_error,
                   sensitivity::constraint_estimate(lower.spec, lower.flow, ctx, latent, pi),
                   sensitivity::constraint_estimate(upper.spec, upper.flow, ctx, latent, pi)});
  }
  return out;
}

}  // namespace ncsa::stage2
