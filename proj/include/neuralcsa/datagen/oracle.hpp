#pragma once

// Oracle sensitivity parameters from known latent distributions.
//
// The latent is described by masses over a common partition of the U space:
// p_x[i] = P(U in cell i | x) and p_xa[i] = P(U in cell i | x, a). Gamma* is
// the constraint value itself, since it is the smallest Gamma for which the
// constraint holds.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neuralcsa/error.hpp"
#include "neuralcsa/sensitivity/models.hpp"

namespace ncsa::datagen {

struct LatentMasses {
  std::vector<double> p_x;
  std::vector<double> p_xa;
  std::optional<double> pi;  // P(a | x) for binary treatments
};

inline double oracle_gamma(const sensitivity::SensitivitySpec& spec, const LatentMasses& m) {
  require(m.p_x.size() == m.p_xa.size() && !m.p_x.empty(), ErrorCode::dimension_mismatch,
          "oracle: latent mass vectors differ in length");
  std::vector<double> rho;
  std::vector<double> weight;
  for (std::size_t i = 0; i < m.p_x.size(); ++i) {
    if (m.p_x[i] == 0.0 && m.p_xa[i] == 0.0) continue;
    require(m.p_x[i] > 0.0 && m.p_xa[i] > 0.0, ErrorCode::positivity,
            [&] { return "oracle: latent cell " + std::to_string(i) + " has mass under only one of P(u|x), P(u|x,a)"; });
    rho.push_back(sensitivity::rho_pointwise(spec, m.p_x[i] / m.p_xa[i], m.pi));
    weight.push_back(m.p_xa[i]);
  }
  double total = 0.0;
  for (double w : weight) total += w;
  switch (spec.kind) {
    case sensitivity::ModelKind::msm:
    case sensitivity::ModelKind::cmsm:
    case sensitivity::ModelKind::wmsm: {
      double best = 1.0;
      for (double r : rho) best = std::max({best, r, 1.0 / r});
      return best;
    }
    case sensitivity::ModelKind::rosenbaum: {
      const auto [lo, hi] = std::minmax_element(rho.begin(), rho.end());
      return *hi / *lo;
    }
    case sensitivity::ModelKind::f: {
      double fwd = 0.0;
      double rev = 0.0;
      for (std::size_t i = 0; i < rho.size(); ++i) {
        fwd += weight[i] * sensitivity::f_value<double>(spec.f, rho[i]);
        rev += weight[i] * sensitivity::f_value<double>(spec.f, 1.0 / rho[i]);
      }
      return std::max(fwd, rev) / total;
    }
  }
  return NAN;
}

/// The six models compared throughout: MSM (or CMSM), four f-models, Rosenbaum.
inline std::vector<sensitivity::SensitivitySpec> standard_models(bool binary_treatment) {
  using sensitivity::FDivergence;
  using sensitivity::ModelKind;
  std::vector<sensitivity::SensitivitySpec> out;
  sensitivity::SensitivitySpec s;
  s.kind = binary_treatment ? ModelKind::msm : ModelKind::cmsm;
  out.push_back(s);
  for (FDivergence f : {FDivergence::kl, FDivergence::tv, FDivergence::he, FDivergence::chi2}) {
    s.kind = ModelKind::f;
    s.f = f;
    s.gamma = 0.0;
    out.push_back(s);
  }
  s.kind = ModelKind::rosenbaum;
  s.gamma = 1.0;
  out.push_back(s);
  return out;
}

inline double median(std::vector<double> v) {
  require(!v.empty(), ErrorCode::invalid_argument, "median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace ncsa::datagen
