#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <boost/math/distributions/beta.hpp>
#include <gtest/gtest.h>

#include "neuralcsa/datagen/binary.hpp"
#include "neuralcsa/datagen/continuous.hpp"
#include "neuralcsa/datagen/oracle.hpp"
#include "neuralcsa/datagen/semisynthetic.hpp"

using namespace ncsa;
using namespace ncsa::datagen;

namespace {

sensitivity::SensitivitySpec model(const std::string& label) {
  for (const auto& s : standard_models(true)) {
    if (s.label() == label) return s;
  }
  for (const auto& s : standard_models(false)) {
    if (s.label() == label) return s;
  }
  throw std::runtime_error(label);
}

double odds(double p) { return p / (1.0 - p); }

}  // namespace

TEST(BinaryDgp, PropensityAtZeroIsHalf) { EXPECT_DOUBLE_EQ(BinaryDgp::propensity(0.0), 0.5); }

TEST(BinaryDgp, FullPropensityMarginalizesToObserved) {
  for (double gamma : {1.0, 2.0, 5.0}) {
    BinaryDgp d;
    d.gamma = gamma;
    for (double x : linear_grid(-1.0, 1.0, 21)) {
      const double pu = d.latent_probability(x);
      EXPECT_NEAR(d.full_propensity(x, 1) * pu + d.full_propensity(x, 0) * (1.0 - pu), BinaryDgp::propensity(x), 1e-12);
    }
  }
}

TEST(BinaryDgp, OddsRatioIsGammaOrInverse) {
  BinaryDgp d;
  d.gamma = 3.0;
  for (double x : linear_grid(-1.0, 1.0, 11)) {
    const double pi = BinaryDgp::propensity(x);
    EXPECT_NEAR(odds(d.full_propensity(x, 1)) / odds(pi), 3.0, 1e-9);
    EXPECT_NEAR(odds(d.full_propensity(x, 0)) / odds(pi), 1.0 / 3.0, 1e-9);
  }
}

TEST(BinaryDgp, EmpiricalOddsRatioWithinFivePercent) {
  BinaryDgp d;
  d.gamma = 2.0;
  d.n = 100000;
  d.seed = 1;
  std::vector<double> u;
  const data::Dataset ds = sample_binary(d, &u);
  // x-bin [0, 0.2]: pi varies little, compare pooled odds ratios.
  double n1 = 0, a1 = 0, n0 = 0, a0 = 0, pis = 0, cnt = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double x = ds.x(i, 0);
    if (x < 0.0 || x > 0.2) continue;
    (u[i] == 1.0 ? n1 : n0) += 1.0;
    (u[i] == 1.0 ? a1 : a0) += ds.a[i];
    pis += ds.a[i];
    cnt += 1.0;
  }
  const double pi = pis / cnt;
  EXPECT_NEAR(odds(a1 / n1) / odds(pi), 2.0, 0.1);
  EXPECT_NEAR(odds(a0 / n0) / odds(pi), 0.5, 0.025);
}

TEST(BinaryDgp, ObservedPropensityMatchesAcrossBins) {
  BinaryDgp d;
  d.gamma = 2.0;
  d.n = 100000;
  d.seed = 2;
  const data::Dataset ds = sample_binary(d);
  for (int b = 0; b < 10; ++b) {
    const double lo = -1.0 + 0.2 * b;
    double n = 0, a = 0, pi = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const double x = ds.x(i, 0);
      if (x < lo || x >= lo + 0.2) continue;
      n += 1;
      a += ds.a[i];
      pi += BinaryDgp::propensity(x);
    }
    const double p = pi / n;
    EXPECT_LE(std::fabs(a / n - p), 3.0 * std::sqrt(p * (1 - p) / n)) << "bin " << b;
  }
}

TEST(BinaryDgp, GammaOneMakesLatentIrrelevant) {
  BinaryDgp d;
  d.gamma = 1.0;
  for (double x : {-0.7, 0.0, 0.4}) {
    EXPECT_NEAR(d.full_propensity(x, 0), d.full_propensity(x, 1), 1e-12);
    for (double a : {0.0, 1.0}) {
      const LatentMasses m = d.latent(x, a);
      EXPECT_NEAR(m.p_x[1], m.p_xa[1], 1e-12);
      for (const auto& s : standard_models(true)) EXPECT_NEAR(oracle_gamma(s, m), s.unconfounded_value(), 1e-12);
    }
  }
}

TEST(BinaryDgp, OracleMsmIsGenerativeGammaEverywhere) {
  BinaryDgp d;
  d.gamma = 2.0;
  const GroundTruth g = binary_ground_truth(d);
  ASSERT_EQ(g.points.size(), 202U);
  for (const TruthPoint& p : g.points) {
    EXPECT_NEAR(p.oracle_gamma.at("msm"), 2.0, 1e-9);
    EXPECT_NEAR(p.oracle_gamma.at("rosenbaum"), 4.0, 1e-9);
  }
  EXPECT_NEAR(g.summary().gamma.at("msm"), 2.0, 1e-9);
}

TEST(BinaryDgp, OracleKlMatchesExhaustiveEnumeration) {
  BinaryDgp d;
  d.gamma = 2.0;
  for (double x : {-0.9, -0.2, 0.5}) {
    for (int a = 0; a < 2; ++a) {
      // Joint P(u, a | x) by enumeration, then Bayes.
      double joint[2];
      for (int u = 0; u < 2; ++u) {
        const double pu = u == 1 ? d.latent_probability(x) : 1.0 - d.latent_probability(x);
        const double pa = a == 1 ? d.full_propensity(x, u) : 1.0 - d.full_propensity(x, u);
        joint[u] = pu * pa;
      }
      const double p_a = joint[0] + joint[1];
      double fwd = 0.0, rev = 0.0;
      for (int u = 0; u < 2; ++u) {
        const double pu = u == 1 ? d.latent_probability(x) : 1.0 - d.latent_probability(x);
        const double post = joint[u] / p_a;
        const double rho = (pu / post - p_a) / (1.0 - p_a);
        fwd += post * rho * std::log(rho);
        rev += post * (1.0 / rho) * std::log(1.0 / rho);
      }
      EXPECT_NEAR(oracle_gamma(model("f-kl"), d.latent(x, a)), std::max(fwd, rev), 1e-12);
      EXPECT_GT(std::max(fwd, rev), 0.0);
    }
  }
}

TEST(BinaryDgp, TruthMatchesMonteCarloIntervention) {
  BinaryDgp d;
  d.gamma = 2.0;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> normal;
  const int n = 200000;
  for (double x : {-0.5, 0.3}) {
    for (double a : {0.0, 1.0}) {
      double s = 0, s2 = 0;
      for (int i = 0; i < n; ++i) {
        const int u = coin(rng) < d.latent_probability(x) ? 1 : 0;
        const double y = BinaryDgp::outcome_mean(x, a, u) + normal(rng);
        s += y;
        s2 += y * y;
      }
      const double m = s / n;
      const double se = std::sqrt((s2 / n - m * m) / n);
      EXPECT_LE(std::fabs(m - d.truth(x, a)), 3.0 * se);
    }
  }
}

TEST(BinaryDgp, TwoOutcomesAndValidation) {
  BinaryDgp d;
  d.outcomes = 2;
  d.n = 50;
  EXPECT_EQ(sample_binary(d).d_y(), 2);
  d.gamma = 0.5;
  EXPECT_THROW(sample_binary(d), Error);
}

TEST(BinaryDgp, SameSeedSameData) {
  BinaryDgp d;
  d.n = 100;
  d.seed = 9;
  EXPECT_EQ(sample_binary(d).y, sample_binary(d).y);
  BinaryDgp e = d;
  e.seed = 10;
  EXPECT_FALSE(sample_binary(d).y == sample_binary(e).y);
}

TEST(ContinuousDgp, TruthAtCentre) { EXPECT_DOUBLE_EQ(ContinuousDgp::truth(0.0, 0.5), 1.5); }

TEST(ContinuousDgp, NoConfoundingGivesUnconfoundedOracle) {
  ContinuousDgp d;
  d.gamma = 0.0;
  for (double x : {-0.5, 0.0, 0.8}) {
    for (const auto& s : standard_models(false)) {
      EXPECT_NEAR(oracle_gamma(s, d.latent_point(x, 0.5)), s.unconfounded_value(), 1e-12);
      EXPECT_NEAR(oracle_gamma(s, d.latent_binned(x, 0.3)), s.unconfounded_value(), 1e-12);
    }
  }
}

TEST(ContinuousDgp, PointwiseOracleMatchesHandComputation) {
  ContinuousDgp d;
  // x = 0, a = 0.5: Beta(1,1) density 1, Beta(3,3) density 1.875.
  const LatentMasses m = d.latent_point(0.0, 0.5);
  EXPECT_NEAR(m.p_xa[0], 1.0 / 2.875, 1e-12);
  EXPECT_NEAR(oracle_gamma(model("cmsm"), m), 2.875 / 2.0, 1e-12);
  EXPECT_THROW(d.latent_point(-1.0, 0.5), Error);
}

TEST(ContinuousDgp, BinnedOracleIsFiniteAtBoundary) {
  ContinuousDgp d;
  const LatentMasses m = d.latent_binned(-1.0, 0.5);
  for (const auto& s : standard_models(false)) EXPECT_TRUE(std::isfinite(oracle_gamma(s, m))) << s.label();
  const GroundTruth g = continuous_ground_truth(d);
  EXPECT_EQ(g.summaries.size(), 3U);
  for (const auto& s : g.summaries) {
    for (const auto& [label, v] : s.gamma) EXPECT_TRUE(std::isfinite(v)) << label;
    EXPECT_GT(s.gamma.at("cmsm"), 1.0);
  }
}

TEST(ContinuousDgp, CellMassesMatchHistogramOfSimulation) {
  ContinuousDgp d;
  d.n = 400000;
  d.seed = 3;
  std::vector<double> u;
  const data::Dataset ds = sample_continuous(d, &u);
  for (auto [x0, x1, a0, a1] : {std::array<double, 4>{0.0, 0.2, 0.4, 0.6}, std::array<double, 4>{-0.9, -0.7, 0.1, 0.2}}) {
    double n = 0, ones = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.x(i, 0) < x0 || ds.x(i, 0) >= x1 || ds.a[i] < a0 || ds.a[i] >= a1) continue;
      n += 1;
      ones += u[i];
    }
    const double p = d.cell_masses(x0, x1, a0, a1).p_xa[1];
    ASSERT_GT(n, 500);
    EXPECT_LE(std::fabs(ones / n - p), 3.0 * std::sqrt(p * (1 - p) / n) + 2e-3) << x0 << " " << a0;
  }
}

TEST(ContinuousDgp, ThinBinMeanMatchesTruth) {
  ContinuousDgp d;
  d.n = 100000;
  d.seed = 4;
  const data::Dataset ds = sample_continuous(d);
  double n = 0, s = 0, s2 = 0, truth = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double x = ds.x(i, 0);
    const double a = ds.a[i];
    if (std::fabs(x) > 0.05 || std::fabs(a - 0.5) > 0.05) continue;
    n += 1;
    s += ds.y(i, 0);
    s2 += ds.y(i, 0) * ds.y(i, 0);
    truth += ContinuousDgp::truth(x, a);
  }
  const double m = s / n;
  EXPECT_LE(std::fabs(m - truth / n), 3.0 * std::sqrt((s2 / n - m * m) / n));
}

TEST(ContinuousDgp, TreatmentsStayFiniteAtSmallBetaShapes) {
  ContinuousDgp d;
  d.gamma = 2.0;  // shape 2 + x + 2 (u - 0.5) approaches 0 as x -> -1 with u = 0
  d.n = 200000;
  d.seed = 8;
  std::vector<double> u;
  const data::Dataset ds = sample_continuous(d, &u);
  // Kolmogorov distance to Beta(s, s) in a thin x slice, with s at the slice midpoint.
  std::vector<double> slice;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ASSERT_TRUE(std::isfinite(ds.a[i]));
    ASSERT_GE(ds.a[i], 0.0);
    ASSERT_LE(ds.a[i], 1.0);
    if (u[i] == 0 && ds.x(i, 0) > -0.96 && ds.x(i, 0) < -0.94) slice.push_back(ds.a[i]);
  }
  std::sort(slice.begin(), slice.end());
  const boost::math::beta_distribution<double> beta(0.05, 0.05);
  double ks = 0.0;
  const double n = static_cast<double>(slice.size());
  for (std::size_t i = 0; i < slice.size(); ++i) {
    const double f = boost::math::cdf(beta, slice[i]);
    ks = std::max({ks, std::fabs(f - static_cast<double>(i) / n), std::fabs(static_cast<double>(i + 1) / n - f)});
  }
  ASSERT_GT(slice.size(), 800U);
  EXPECT_LE(ks, 1.63 / std::sqrt(n) + 0.02);  // 1% KS quantile plus slack for the shape range within the slice
}

TEST(ContinuousDgp, RejectsStrongConfounding) {
  ContinuousDgp d;
  d.gamma = 2.5;
  EXPECT_THROW(d.validate(), Error);
}

TEST(SemiSynthetic, WeightHasUnitMeanAndValidPropensity) {
  SemiSyntheticDgp d;
  for (double pi : {0.26, 0.4, 0.5, 0.6, 0.74}) {
    double mean = 0.0;
    const int m = 10000;
    for (int i = 0; i < m; ++i) {
      const double u = (i + 0.5) / m;
      mean += d.weight(pi, u) / m;
      const double p = d.full_propensity(pi, u);
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
    }
    EXPECT_NEAR(mean, 1.0, 1e-9);
  }
  d.gamma = 1.0;
  EXPECT_DOUBLE_EQ(d.weight(0.7, 0.1), 1.0);
}

TEST(SemiSynthetic, ObservedPropensityMatchesPiHat) {
  SemiSyntheticDgp d;
  d.n = 100000;
  d.seed = 5;
  const Generated g = generate_semisynthetic(d);
  const data::Dataset& ds = g.data;
  for (double lo : {0.25, 0.35, 0.45, 0.55, 0.65}) {
    double n = 0, a = 0, pis = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const double pi = d.propensity(ds.x.row(i));
      if (pi < lo || pi >= lo + 0.1) continue;
      n += 1;
      a += ds.a[i];
      pis += pi;
    }
    const double p = pis / n;
    EXPECT_LE(std::fabs(a / n - p), 3.0 * std::sqrt(p * (1 - p) / n)) << lo;
  }
}

TEST(SemiSynthetic, TruthIsCateFormulaAndTestFilterHolds) {
  SemiSyntheticDgp d;
  d.n = 2000;
  d.seed = 6;
  const Generated g = generate_semisynthetic(d);
  EXPECT_EQ(g.data.size(), 1800U);
  EXPECT_EQ(g.data.d_x(), 8);
  ASSERT_FALSE(g.truth.points.empty());
  for (std::size_t i = 0; i + 1 < g.truth.points.size(); i += 2) {
    const TruthPoint& p0 = g.truth.points[i];
    const TruthPoint& p1 = g.truth.points[i + 1];
    ASSERT_EQ(p0.unit, p1.unit);
    double s = 0.0;
    for (double v : p0.x) s += v;
    EXPECT_NEAR(p1.truth - p0.truth, 2.0 * (s + 0.5) / 9.0, 1e-12);
    const double pi = d.propensity(p0.x);
    EXPECT_GE(pi, 0.3);
    EXPECT_LE(pi, 0.7);
    EXPECT_NE(p0.observed, p1.observed);
  }
}

TEST(SemiSynthetic, MsmOracleMatchesExtremeWeights) {
  SemiSyntheticDgp d;
  const std::vector<double> x = {0.1, -0.3, 0.2, 0.0, 0.4, -0.1, 1.0, 0.0};
  const double pi = d.propensity(x);
  // rho(u) = (1/w - pi) / (1 - pi) for a = 1; w ranges over [gamma, 2 - gamma] here.
  ASSERT_LE(pi, 1.0 / (2.0 - d.gamma));
  const double rho_hi = (1.0 / d.gamma - pi) / (1.0 - pi);
  const double rho_lo = (1.0 / (2.0 - d.gamma) - pi) / (1.0 - pi);
  const double cells = d.latent_cells;
  const double w_edge_hi = d.weight(pi, 0.5 / cells);
  const double w_edge_lo = d.weight(pi, 1.0 - 0.5 / cells);
  const double expected = std::max((1.0 / w_edge_hi - pi) / (1.0 - pi), (1.0 - pi) / (1.0 / w_edge_lo - pi));
  EXPECT_NEAR(oracle_gamma(model("msm"), d.latent(x, 1.0)), expected, 1e-9);
  EXPECT_NEAR(expected, std::max(rho_hi, 1.0 / rho_lo), 0.02 * expected);
}

TEST(GroundTruthJson, RoundTrip) {
  BinaryDgp d;
  d.grid_points = 3;
  const GroundTruth g = binary_ground_truth(d);
  const GroundTruth r = ground_truth_from_json(nlohmann::json::parse(to_json(g).dump()));
  ASSERT_EQ(r.points.size(), g.points.size());
  EXPECT_EQ(r.points[1].oracle_gamma, g.points[1].oracle_gamma);
  EXPECT_EQ(r.summary().gamma, g.summary().gamma);
  EXPECT_EQ(r.config, g.config);
}

TEST(OracleGamma, RejectsOneSidedSupport) {
  LatentMasses m{{0.5, 0.5}, {1.0, 0.0}, std::nullopt};
  EXPECT_THROW(oracle_gamma(model("cmsm"), m), Error);
}
