#pragma once

// Constraint estimate D-hat for a Stage-2 flow at one (x, a), evaluated on
// latent draws u_j ~ N(0, I): the Stage-2 density at u_j comes from the
// flow's inverse, the observational latent density is N(u_j).

#include <optional>
#include <span>
#include <vector>

#include "neuralcsa/flow/conditional_flow.hpp"
#include "neuralcsa/matrix.hpp"
#include "neuralcsa/sensitivity/models.hpp"

namespace ncsa::sensitivity {

/// log r(u_j) = log p(u_j) - log N(u_j) for each row of `latent`, floored.
template <class T>
std::vector<T> latent_log_ratios(const flow::FlowAtContext<T>& stage2, const Matrix& latent) {
  std::vector<T> out(latent.rows);
  std::vector<T> u(latent.cols);
  for (std::size_t j = 0; j < latent.rows; ++j) {
    const auto row = latent.row(j);
    for (std::size_t c = 0; c < latent.cols; ++c) u[c] = T(row[c]);
    const T log_p = stage2.log_prob(u);
    out[j] = floored_log_ratio<T>(log_p, flow::standard_normal_log_density<double>(row));
  }
  return out;
}

template <class T>
T constraint_estimate(const SensitivitySpec& spec, const flow::FlowAtContext<T>& stage2, const Matrix& latent,
                      std::optional<double> pi) {
  const std::vector<T> log_r = latent_log_ratios(stage2, latent);
  return constraint_from_log_ratios<T>(spec, log_r, pi);
}

inline double constraint_estimate(const SensitivitySpec& spec, const flow::ConditionalFlow& stage2,
                                  std::span<const double> context, const Matrix& latent, std::optional<double> pi) {
  require(flow::all_finite(latent.data), ErrorCode::non_finite, "sensitivity: non-finite latent sample");
  return constraint_estimate<double>(spec, stage2.at(context), latent, pi);
}

/// k i.i.d. N(0, I_d) rows from `seed`.
inline Matrix standard_normal_draws(std::size_t k, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(k, d);
  for (double& v : m.data) v = n(rng);
  return m;
}

}  // namespace ncsa::sensitivity
