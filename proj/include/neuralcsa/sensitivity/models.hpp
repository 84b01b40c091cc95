#pragma once

// Sensitivity models as constraints on the latent shift between P(U | x)
// and P(U | x, a).
//
// With the observational latent P(U | x, a) = N(0, I) and the Stage-2
// pushforward density p, the latent marginal is the mixture
//   P(U | x) = pi N + (1 - pi) p,        pi = P(a | x)  (pi := 0 for continuous a),
// so P(u | x) / P(u | x, a) = pi + (1 - pi) r(u) with r = p / N, and every
// model below is a function of the pointwise log-ratios log r(u_j).

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuralcsa/ad/tape.hpp"
#include "neuralcsa/error.hpp"
#include "neuralcsa/sensitivity/expression.hpp"

namespace ncsa::sensitivity {

enum class ModelKind { msm, cmsm, f, rosenbaum, wmsm };
enum class FDivergence { kl, tv, he, chi2 };

inline constexpr double kDensityFloor = 1e-12;

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::msm: return "msm";
    case ModelKind::cmsm: return "cmsm";
    case ModelKind::f: return "f";
    case ModelKind::rosenbaum: return "rosenbaum";
    case ModelKind::wmsm: return "wmsm";
  }
  return "?";
}

inline std::string to_string(FDivergence f) {
  switch (f) {
    case FDivergence::kl: return "kl";
    case FDivergence::tv: return "tv";
    case FDivergence::he: return "he";
    case FDivergence::chi2: return "chi2";
  }
  return "?";
}

struct SensitivitySpec {
  ModelKind kind = ModelKind::msm;
  FDivergence f = FDivergence::kl;
  double gamma = 1.0;
  Expression weight;  // wmsm only; q(x, a) as a function of pi

  [[nodiscard]] bool is_f() const { return kind == ModelKind::f; }

  /// Constraint value under no confounding: 1 for ratio models, 0 for f-models.
  [[nodiscard]] double unconfounded_value() const { return is_f() ? 0.0 : 1.0; }

  /// Short label, e.g. "msm", "f-kl".
  [[nodiscard]] std::string label() const { return is_f() ? "f-" + to_string(f) : to_string(kind); }

  void validate() const {
    require(std::isfinite(gamma), ErrorCode::invalid_argument, "sensitivity: gamma must be finite");
    if (is_f()) {
      require(gamma >= 0.0, ErrorCode::invalid_argument, "sensitivity: f-models need gamma >= 0");
    } else {
      require(gamma >= 1.0, ErrorCode::invalid_argument, "sensitivity: " + to_string(kind) + " needs gamma >= 1");
    }
  }

  bool operator==(const SensitivitySpec& o) const {
    return kind == o.kind && gamma == o.gamma && (!is_f() || f == o.f) &&
           (kind != ModelKind::wmsm || weight.text() == o.weight.text());
  }
};

inline SensitivitySpec spec_from_json(const nlohmann::json& j) {
  SensitivitySpec s;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "msm") {
    s.kind = ModelKind::msm;
  } else if (kind == "cmsm") {
    s.kind = ModelKind::cmsm;
  } else if (kind == "f") {
    s.kind = ModelKind::f;
    const std::string f = j.at("f").get<std::string>();
    if (f == "kl") {
      s.f = FDivergence::kl;
    } else if (f == "tv") {
      s.f = FDivergence::tv;
    } else if (f == "he") {
      s.f = FDivergence::he;
    } else if (f == "chi2") {
      s.f = FDivergence::chi2;
    } else {
      throw Error(ErrorCode::invalid_argument, "sensitivity: unknown f '" + f + "'");
    }
  } else if (kind == "rosenbaum") {
    s.kind = ModelKind::rosenbaum;
  } else if (kind == "wmsm") {
    s.kind = ModelKind::wmsm;
    s.weight = Expression(j.value("weight", std::string("pi")));
  } else {
    throw Error(ErrorCode::invalid_argument, "sensitivity: unknown kind '" + kind + "'");
  }
  s.gamma = j.at("gamma").get<double>();
  s.validate();
  return s;
}

inline nlohmann::json to_json(const SensitivitySpec& s) {
  nlohmann::json j = {{"kind", to_string(s.kind)}, {"gamma", s.gamma}};
  if (s.is_f()) j["f"] = to_string(s.f);
  if (s.kind == ModelKind::wmsm) j["weight"] = s.weight.text();
  return j;
}

/// f with f(1) = 0, for both doubles and tape variables.
template <class T>
T f_value(FDivergence f, const T& x) {
  switch (f) {
    case FDivergence::kl: return x * ad::log(x);
    case FDivergence::tv: return 0.5 * ad::abs(x - 1.0);
    case FDivergence::he: return ad::square(ad::sqrt(x) - 1.0);
    case FDivergence::chi2: return ad::square(x - 1.0);
  }
  return x;
}

namespace detail {

inline void check_propensity(std::optional<double> pi) {
  if (pi) {
    require(*pi > 0.0 && *pi < 1.0, ErrorCode::positivity,
            [&] { return "sensitivity: propensity " + std::to_string(*pi) + " violates positivity (must lie in (0, 1))"; });
  }
}

/// Weight q(x, a) entering the rho formula; pi for the plain MSM family.
inline double rho_weight(const SensitivitySpec& spec, std::optional<double> pi) {
  if (!pi || spec.kind == ModelKind::cmsm) return 0.0;
  if (spec.kind != ModelKind::wmsm) return *pi;
  const double q = spec.weight(*pi);
  require(std::isfinite(q) && q >= 0.0 && q < 1.0, ErrorCode::invalid_argument,
          "sensitivity: weight expression '" + spec.weight.text() + "' gave " + std::to_string(q) +
              ", expected a value in [0, 1)");
  return q;
}

}  // namespace detail

/// rho = (ratio - q) / (1 - q) with ratio = P(u | x) / P(u | x, a) and q = P(a | x)
/// (or the weight function for wmsm). An empty propensity is the continuous case.
inline double rho_pointwise(const SensitivitySpec& spec, double ratio, std::optional<double> pi) {
  require(ratio > 0.0 && std::isfinite(ratio), ErrorCode::degenerate_density,
          "sensitivity: density ratio must be positive and finite");
  detail::check_propensity(pi);
  const double q = detail::rho_weight(spec, pi);
  return (ratio - q) / (1.0 - q);
}

/// Pairwise Rosenbaum ratio rho(u1, u2) = rho(u2) / rho(u1).
inline double rho_pairwise(double ratio1, double ratio2, std::optional<double> pi) {
  SensitivitySpec msm;
  return rho_pointwise(msm, ratio2, pi) / rho_pointwise(msm, ratio1, pi);
}

/// Monte-Carlo constraint value from the log-ratios log r(u_j) = log p(u_j) - log N(u_j)
/// at latent draws u_j ~ N(0, I). `pi` is P(a | x) for binary treatments, empty otherwise.
template <class T>
T constraint_from_log_ratios(const SensitivitySpec& spec, std::span<const T> log_r, std::optional<double> pi) {
  require(!log_r.empty(), ErrorCode::invalid_argument, "sensitivity: no latent samples");
  detail::check_propensity(pi);
  const double q = detail::rho_weight(spec, pi);
  const double mix = pi && spec.kind != ModelKind::cmsm ? *pi : 0.0;
  std::vector<T> log_rho(log_r.size());
  for (std::size_t j = 0; j < log_r.size(); ++j) {
    require(std::isfinite(ad::value(log_r[j])), ErrorCode::degenerate_density,
            [&] { return "sensitivity: non-finite density ratio at latent sample " + std::to_string(j); });
    if (mix == q) {
      log_rho[j] = log_r[j];
    } else {
      // (pi + (1 - pi) r - q) / (1 - q)
      const T rho = (mix + (1.0 - mix) * ad::exp(log_r[j]) - q) / (1.0 - q);
      require(ad::value(rho) > 0.0, ErrorCode::degenerate_density,
              [&] { return "sensitivity: weighted ratio is not positive at latent sample " + std::to_string(j); });
      log_rho[j] = ad::log(rho);
    }
  }
  switch (spec.kind) {
    case ModelKind::msm:
    case ModelKind::cmsm:
    case ModelKind::wmsm: {
      T best = ad::abs(log_rho[0]);
      for (std::size_t j = 1; j < log_rho.size(); ++j) best = ad::max(best, ad::abs(log_rho[j]));
      return ad::exp(best);
    }
    case ModelKind::rosenbaum: {
      // All ordered pairs: max |log rho(u2) - log rho(u1)| = max log rho - min log rho.
      T hi = log_rho[0];
      T lo = log_rho[0];
      for (std::size_t j = 1; j < log_rho.size(); ++j) {
        hi = ad::max(hi, log_rho[j]);
        lo = ad::min(lo, log_rho[j]);
      }
      return ad::exp(hi - lo);
    }
    case ModelKind::f: {
      std::vector<T> fwd(log_rho.size());
      std::vector<T> rev(log_rho.size());
      for (std::size_t j = 0; j < log_rho.size(); ++j) {
        fwd[j] = f_value<T>(spec.f, ad::exp(log_rho[j]));
        rev[j] = f_value<T>(spec.f, ad::exp(-log_rho[j]));
      }
      const double inv_k = 1.0 / static_cast<double>(log_rho.size());
      return ad::max(ad::sum(std::span<const T>(fwd)) * inv_k, ad::sum(std::span<const T>(rev)) * inv_k);
    }
  }
  return T(NAN);
}

/// log r with the density floor applied to both densities.
template <class T>
T floored_log_ratio(const T& log_p, double log_normal) {
  static const double log_floor = std::log(kDensityFloor);
  return ad::max(log_p, T(log_floor)) - std::max(log_normal, log_floor);
}

}  // namespace ncsa::sensitivity
