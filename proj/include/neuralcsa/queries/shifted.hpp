#pragma once

// Sampling from the shifted interventional distribution and the Monte-Carlo
// Stage-2 loss.
//
// For one (x, a): draw u~_j ~ N(0, I) and xi_j ~ Bernoulli(pi) (xi = 0 for
// continuous treatments), mix u_j = (1 - xi_j) f~(u~_j) + xi_j u~_j and push
// through Stage 1: y_j = f*(u_j). The latent mixture density is
//   q(u) = pi N(u) + (1 - pi) p~(u),  p~ the Stage-2 pushforward density.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "neuralcsa/ad/tape.hpp"
#include "neuralcsa/error.hpp"
#include "neuralcsa/flow/conditional_flow.hpp"
#include "neuralcsa/matrix.hpp"
#include "neuralcsa/observational/stage1.hpp"
#include "neuralcsa/queries/query.hpp"

namespace ncsa::queries {

inline constexpr std::size_t kMinEvaluationSamples = 100;

/// Latent draws for one unit.
struct LatentDraws {
  Matrix u;                      // k x d_y standard normal
  std::vector<std::uint8_t> xi;  // k mixing indicators
};

inline LatentDraws draw_latent(std::size_t k, std::size_t d_y, std::optional<double> pi, std::mt19937_64& rng) {
  LatentDraws out{Matrix(k, d_y), std::vector<std::uint8_t>(k, 0)};
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : out.u.data) v = normal(rng);
  if (pi) {
    std::bernoulli_distribution coin(*pi);
    for (auto& x : out.xi) x = coin(rng) ? 1 : 0;
  }
  return out;
}

/// Mixed latent points u_j (doubles, no gradient).
inline Matrix mixed_latent(const flow::FlowAtContext<double>& stage2, const LatentDraws& draws) {
  Matrix out = draws.u;
  for (std::size_t j = 0; j < out.rows; ++j) {
    if (draws.xi[j] != 0) continue;
    const auto r = stage2.forward(draws.u.row(j));
    std::copy(r.value.begin(), r.value.end(), out.row(j).begin());
  }
  return out;
}

/// Stage-1 pushforward of latent rows, in standardized outcome units.
inline Matrix push_stage1(const flow::FlowAtContext<double>& stage1, const Matrix& latent) {
  Matrix out(latent.rows, latent.cols);
  for (std::size_t j = 0; j < latent.rows; ++j) {
    const auto r = stage1.forward(latent.row(j));
    std::copy(r.value.begin(), r.value.end(), out.row(j).begin());
  }
  return out;
}

/// k outcome samples from the shifted distribution at (x, a), original units.
inline Matrix shifted_samples(const observational::Stage1Model& stage1, const flow::ConditionalFlow& stage2,
                              std::span<const double> x, double a, std::size_t k, std::uint64_t seed,
                              std::optional<double> pi) {
  const std::vector<double> ctx = flow::make_context(x, a);
  require(flow::all_finite(ctx), ErrorCode::non_finite, "query: non-finite evaluation point");
  std::mt19937_64 rng(seed);
  const auto d_y = static_cast<std::size_t>(stage1.d_y());
  const LatentDraws draws = draw_latent(k, d_y, pi, rng);
  Matrix y = push_stage1(stage1.flow.at(ctx), mixed_latent(stage2.at(ctx), draws));
  for (std::size_t i = 0; i < y.rows; ++i) {
    for (std::size_t j = 0; j < d_y; ++j) y(i, j) = stage1.outcome.to_original(y(i, j), j);
  }
  return y;
}

/// Monte-Carlo value of the query under the shifted distribution at (x, a).
inline QueryValue evaluate_query(const QuerySpec& query, const observational::Stage1Model& stage1,
                                 const flow::ConditionalFlow& stage2, std::span<const double> x, double a,
                                 std::size_t k, std::uint64_t seed, std::optional<double> pi) {
  require(k >= kMinEvaluationSamples, ErrorCode::invalid_argument,
          "query: need at least " + std::to_string(kMinEvaluationSamples) + " samples, got " + std::to_string(k));
  query.validate(stage1.d_y());
  require(stage2.config().d_y == stage1.d_y() && stage2.config().context_dim() == stage1.flow.config().context_dim(),
          ErrorCode::dimension_mismatch, "query: Stage-1 and Stage-2 flows have different shapes");
  return apply_functional(query, shifted_samples(stage1, stage2, x, a, k, seed, pi));
}

/// Region in standardized outcome units.
inline QuerySpec standardized(const QuerySpec& q, const data::Standardizer& st) {
  QuerySpec out = q;
  for (std::size_t j = 0; j < out.region.size(); ++j) {
    out.region[j].lo = st.to_standard(q.region[j].lo, j);
    out.region[j].hi = st.to_standard(q.region[j].hi, j);
  }
  return out;
}

/// Tape constants for a frozen parameter vector; operations on them are not recorded.
inline std::vector<ad::Var> constant_parameters(std::span<const double> p) { return {p.begin(), p.end()}; }

struct UnitLoss {
  std::size_t in_region = 0;  // set-probability and quantile queries
};

/// Stage-2 objective for one unit, to be maximized: the Monte-Carlo query
/// estimate for UPPER and its negation for LOWER. `query` regions are in
/// standardized units. Set-probability and quantile terms use the
/// score-function form: the sample location is detached and only
/// log q(u_j) carries gradient.
template <class T>
T stage2_loss(const QuerySpec& query, const LatentDraws& draws, const flow::FlowAtContext<T>& stage1,
              const flow::FlowAtContext<double>& stage1_values, const flow::FlowAtContext<T>& stage2,
              const flow::FlowAtContext<double>& stage2_values, std::optional<double> pi, UnitLoss* info = nullptr) {
  const std::size_t k = draws.u.rows;
  const std::size_t d = draws.u.cols;
  const double inv_k = 1.0 / static_cast<double>(k);
  const double sign = query.direction == Direction::upper ? 1.0 : -1.0;
  std::vector<T> terms;
  terms.reserve(k);
  std::vector<T> u(d);

  if (query.type == QueryType::expectation) {
    const auto out = static_cast<std::size_t>(query.outcome);
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t c = 0; c < d; ++c) u[c] = T(draws.u(j, c));
      if (draws.xi[j] == 0) u = stage2.forward(u).value;
      terms.push_back(stage1.forward(u).value[out]);
    }
    return ad::sum(std::span<const T>(terms)) * (sign * inv_k);
  }

  // Membership and the quantile level set are evaluated on detached samples.
  const Matrix latent = mixed_latent(stage2_values, draws);
  const Matrix y = push_stage1(stage1_values, latent);
  QuerySpec region = query;
  double objective_sign = sign;
  if (query.type == QueryType::quantile) {
    // Raising the q-quantile means lowering the mass at or below it.
    const double t = empirical_quantile(y.column(static_cast<std::size_t>(query.outcome)), query.level);
    region.region.assign(d, Interval{});
    region.region[static_cast<std::size_t>(query.outcome)] = {-std::numeric_limits<double>::infinity(), t, true};
    objective_sign = -sign;
  }
  const double mix = pi.value_or(0.0);
  std::size_t hits = 0;
  for (std::size_t j = 0; j < k; ++j) {
    if (!region.in_region(y.row(j))) continue;
    ++hits;
    for (std::size_t c = 0; c < d; ++c) u[c] = T(latent(j, c));
    const T log_p = stage2.log_prob(u);
    const double log_n = flow::standard_normal_log_density<double>(latent.row(j));
    if (mix > 0.0) {
      // log(pi N + (1 - pi) p~), computed relative to log N.
      terms.push_back(log_n + ad::log(mix + (1.0 - mix) * ad::exp(log_p - log_n)));
    } else {
      terms.push_back(log_p);
    }
  }
  if (info != nullptr) info->in_region = hits;
  if (terms.empty()) return T(0.0);
  return ad::sum(std::span<const T>(terms)) * (objective_sign * inv_k);
}

}  // namespace ncsa::queries
