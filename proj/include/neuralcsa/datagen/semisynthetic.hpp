#pragma once

// Semi-synthetic process: real or synthetic covariates, a propensity pi^(x),
// a uniform hidden confounder and a treatment weight w(x, u) with E_u[w] = 1.
//   U ~ U[0, 1]
//   w(x, u) = gamma + 2u (1 - gamma)                  if gamma >= 2 - 1/pi^(x)
//           = 2 - 1/pi^(x) + 2u (1/pi^(x) - 1)        otherwise
//   A | x, u ~ Bernoulli(w(x, u) pi^(x))
//   Y = (2A - 1) (sum_i x_i + U) / (d_x + 1) + eps,  eps ~ N(0, noise^2)
// The synthetic propensity is pi^(x) = 0.25 + 0.5 sigmoid((3 / d_x) sum_i x_i).
// The last test_fraction of rows form the test set; test points with pi^ outside
// [pi_lo, pi_hi] are dropped.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuralcsa/data/dataset.hpp"
#include "neuralcsa/datagen/binary.hpp"
#include "neuralcsa/datagen/ground_truth.hpp"
#include "neuralcsa/datagen/oracle.hpp"
#include "neuralcsa/error.hpp"

namespace ncsa::datagen {

struct SemiSyntheticDgp {
  std::size_t n = 5000;
  double gamma = 0.25;
  int d_x = 8;
  int binary_columns = 2;
  double correlation = 0.3;  // equicorrelation of the Gaussian columns
  double noise = 0.1;
  double test_fraction = 0.1;
  double pi_lo = 0.3;
  double pi_hi = 0.7;
  int latent_cells = 2000;
  std::string covariates_csv;  // optional; replaces the synthetic covariates
  std::uint64_t seed = 0;

  void validate() const {
    require(gamma > 0.0 && gamma <= 1.0, ErrorCode::invalid_argument,
            "semi-synthetic process: gamma must lie in (0, 1]");
    require(d_x >= 1 && binary_columns >= 0 && binary_columns <= d_x, ErrorCode::invalid_argument,
            "semi-synthetic process: need d_x >= 1 and 0 <= binary_columns <= d_x");
    require(correlation >= 0.0 && correlation < 1.0 && noise >= 0.0, ErrorCode::invalid_argument,
            "semi-synthetic process: correlation in [0, 1) and noise >= 0 required");
    require(test_fraction > 0.0 && test_fraction < 1.0 && pi_lo < pi_hi && latent_cells >= 2 && n >= 2,
            ErrorCode::invalid_argument, "semi-synthetic process: invalid split, filter or latent grid");
  }

  [[nodiscard]] double propensity(std::span<const double> x) const {
    double s = 0.0;
    for (double v : x) s += v;
    return 0.25 + 0.5 * sigmoid(3.0 / static_cast<double>(x.size()) * s);
  }

  [[nodiscard]] double weight(double pi, double u) const {
    if (gamma >= 2.0 - 1.0 / pi) return gamma + 2.0 * u * (1.0 - gamma);
    return 2.0 - 1.0 / pi + 2.0 * u * (1.0 / pi - 1.0);
  }

  /// P(A = 1 | x, u).
  [[nodiscard]] double full_propensity(double pi, double u) const {
    const double p = weight(pi, u) * pi;
    require(p >= -1e-12 && p <= 1.0 + 1e-12, ErrorCode::positivity,
            [&] { return "semi-synthetic process: w(x, u) pi^(x) = " + std::to_string(p) + " lies outside [0, 1]"; });
    return std::clamp(p, 0.0, 1.0);
  }

  [[nodiscard]] static double truth(std::span<const double> x, double a) {
    double s = 0.0;
    for (double v : x) s += v;
    return (2.0 * a - 1.0) * (s + 0.5) / static_cast<double>(x.size() + 1);
  }

  [[nodiscard]] LatentMasses latent(std::span<const double> x, double a) const {
    const double pi = propensity(x);
    const auto cells = static_cast<std::size_t>(latent_cells);
    LatentMasses m{std::vector<double>(cells, 1.0 / static_cast<double>(cells)), std::vector<double>(cells),
                   a == 1.0 ? pi : 1.0 - pi};
    double total = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
      const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(cells);
      const double p1 = full_propensity(pi, u);
      m.p_xa[i] = a == 1.0 ? p1 : 1.0 - p1;
      total += m.p_xa[i];
    }
    for (double& v : m.p_xa) v /= total;
    return m;
  }
};

inline SemiSyntheticDgp semisynthetic_dgp_from_json(const nlohmann::json& j) {
  SemiSyntheticDgp d;
  d.n = j.value("n", d.n);
  d.gamma = j.value("gamma", d.gamma);
  d.d_x = j.value("d_x", d.d_x);
  d.binary_columns = j.value("binary_columns", d.binary_columns);
  d.correlation = j.value("correlation", d.correlation);
  d.noise = j.value("noise", d.noise);
  d.test_fraction = j.value("test_fraction", d.test_fraction);
  d.pi_lo = j.value("pi_lo", d.pi_lo);
  d.pi_hi = j.value("pi_hi", d.pi_hi);
  d.latent_cells = j.value("latent_cells", d.latent_cells);
  d.covariates_csv = j.value("covariates_csv", d.covariates_csv);
  d.seed = j.value("seed", d.seed);
  d.validate();
  return d;
}

inline nlohmann::json to_json(const SemiSyntheticDgp& d) {
  return {{"n", d.n},
          {"gamma", d.gamma},
          {"d_x", d.d_x},
          {"binary_columns", d.binary_columns},
          {"correlation", d.correlation},
          {"noise", d.noise},
          {"test_fraction", d.test_fraction},
          {"pi_lo", d.pi_lo},
          {"pi_hi", d.pi_hi},
          {"latent_cells", d.latent_cells},
          {"covariates_csv", d.covariates_csv},
          {"seed", d.seed}};
}

/// Covariate CSV with a header row and numeric columns.
inline Matrix read_covariates(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::io, path + ": empty covariate file");
  const std::size_t cols = data::split_csv_line(line).size();
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = data::split_csv_line(line);
    require(fields.size() == cols, ErrorCode::io, path + ": row " + std::to_string(rows + 2) + " has the wrong width");
    for (const auto& f : fields) values.push_back(data::parse_double(f, path));
    ++rows;
  }
  require(rows >= 2, ErrorCode::io, path + ": need at least two covariate rows");
  Matrix m(rows, cols);
  m.data = std::move(values);
  return m;
}

inline Matrix synthetic_covariates(const SemiSyntheticDgp& d, std::mt19937_64& rng) {
  const auto dx = static_cast<std::size_t>(d.d_x);
  const auto gaussian = static_cast<std::size_t>(d.d_x - d.binary_columns);
  Matrix x(d.n, dx);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const double shared = std::sqrt(d.correlation);
  const double own = std::sqrt(1.0 - d.correlation);
  for (std::size_t i = 0; i < d.n; ++i) {
    const double z0 = normal(rng);
    for (std::size_t j = 0; j < gaussian; ++j) x(i, j) = shared * z0 + own * normal(rng);
    for (std::size_t j = gaussian; j < dx; ++j) x(i, j) = coin(rng) ? 1.0 : 0.0;
  }
  return x;
}

/// Training rows in `data`; test points (both arms per unit) in the ground truth,
/// with Gamma* summarized by the median over observed test points.
inline Generated generate_semisynthetic(SemiSyntheticDgp d, std::vector<double>* latent = nullptr) {
  d.validate();
  std::mt19937_64 rng(d.seed);
  Matrix x = d.covariates_csv.empty() ? synthetic_covariates(d, rng) : read_covariates(d.covariates_csv);
  d.n = x.rows;
  d.d_x = static_cast<int>(x.cols);
  const std::size_t n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(d.test_fraction * d.n)));
  const std::size_t n_train = d.n - n_test;
  require(n_train >= 1, ErrorCode::invalid_argument, "semi-synthetic process: no training rows");

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, d.noise);
  data::Dataset all{x, std::vector<double>(d.n), Matrix(d.n, 1)};
  if (latent != nullptr) latent->assign(d.n, 0.0);
  for (std::size_t i = 0; i < d.n; ++i) {
    const auto row = x.row(i);
    const double pi = d.propensity(row);
    const double u = unif(rng);
    if (latent != nullptr) (*latent)[i] = u;
    const double a = unif(rng) < d.full_propensity(pi, u) ? 1.0 : 0.0;
    double s = 0.0;
    for (double v : row) s += v;
    all.a[i] = a;
    all.y(i, 0) = (2.0 * a - 1.0) * (s + u) / static_cast<double>(row.size() + 1) + normal(rng);
  }

  GroundTruth g{"semisynthetic", to_json(d), {}, {}};
  const auto models = standard_models(true);
  std::map<std::string, std::vector<double>> observed_gamma;
  for (std::size_t i = n_train; i < d.n; ++i) {
    const auto row = x.row(i);
    const double pi = d.propensity(row);
    if (pi < d.pi_lo || pi > d.pi_hi) continue;
    for (double a : {0.0, 1.0}) {
      TruthPoint p{i, {row.begin(), row.end()}, a, SemiSyntheticDgp::truth(row, a), a == all.a[i], {}};
      const LatentMasses m = d.latent(row, a);
      for (const auto& spec : models) {
        const double v = oracle_gamma(spec, m);
        p.oracle_gamma[spec.label()] = v;
        if (p.observed) observed_gamma[spec.label()].push_back(v);
      }
      g.points.push_back(std::move(p));
    }
  }
  require(!g.points.empty(), ErrorCode::invalid_argument,
          "semi-synthetic process: no test point passes the propensity filter");
  OracleSummary s{std::nullopt, "median", {}};
  for (const auto& [label, values] : observed_gamma) s.gamma[label] = median(values);
  g.summaries.push_back(std::move(s));
  return {all.slice(0, n_train), std::move(g)};
}

}  // namespace ncsa::datagen
