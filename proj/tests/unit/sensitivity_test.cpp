#include <cmath>
#include <random>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>

#include "neuralcsa/sensitivity/closed_form.hpp"
#include "neuralcsa/sensitivity/estimate.hpp"
#include "neuralcsa/sensitivity/expression.hpp"
#include "neuralcsa/sensitivity/models.hpp"
#include "test_util.hpp"

using namespace ncsa;
using namespace ncsa::sensitivity;

namespace {

SensitivitySpec make_spec(ModelKind kind, double gamma, FDivergence f = FDivergence::kl) {
  SensitivitySpec s;
  s.kind = kind;
  s.gamma = gamma;
  s.f = f;
  return s;
}

std::vector<SensitivitySpec> all_specs() {
  return {make_spec(ModelKind::msm, 2.0),
          make_spec(ModelKind::cmsm, 2.0),
          make_spec(ModelKind::rosenbaum, 2.0),
          make_spec(ModelKind::wmsm, 2.0),
          make_spec(ModelKind::f, 0.5, FDivergence::kl),
          make_spec(ModelKind::f, 0.5, FDivergence::tv),
          make_spec(ModelKind::f, 0.5, FDivergence::he),
          make_spec(ModelKind::f, 0.5, FDivergence::chi2)};
}

// log r for P(U | x) = N(mu, 1) against N(0, 1).
std::vector<double> shift_log_ratios(double mu, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> out(k);
  for (double& v : out) {
    const double u = n(rng);
    v = mu * u - 0.5 * mu * mu;
  }
  return out;
}

observational::Stage1Model standard_normal_stage1() {
  flow::FlowConfig cfg;
  return {flow::ConditionalFlow::identity(cfg, 1), data::Standardizer::identity(1), true, 0, 0.0, 0.0, 0};
}

}  // namespace

TEST(Rho, EqualDensitiesGiveOne) {
  const SensitivitySpec msm;
  for (double pi : {0.1, 0.5, 0.9}) EXPECT_DOUBLE_EQ(rho_pointwise(msm, 1.0, pi), 1.0);
  EXPECT_DOUBLE_EQ(rho_pointwise(msm, 1.0, std::nullopt), 1.0);
  EXPECT_DOUBLE_EQ(rho_pairwise(1.7, 1.7, 0.3), 1.0);
}

TEST(Rho, DirectFormulaArithmetic) {
  const SensitivitySpec msm;
  EXPECT_DOUBLE_EQ(rho_pointwise(msm, 1.5, 0.5), 2.0);
  // Pairwise: rho(u2) / rho(u1) with rho(u) = (ratio - pi) / (1 - pi).
  EXPECT_NEAR(rho_pairwise(1.5, 0.75, 0.5), ((0.75 - 0.5) / 0.5) / 2.0, 1e-15);
}

TEST(Rho, PositivityViolationsAreErrors) {
  const SensitivitySpec msm;
  for (double pi : {0.0, 1.0}) {
    try {
      (void)rho_pointwise(msm, 1.2, pi);
      FAIL() << "expected positivity error for pi=" << pi;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::positivity);
    }
  }
}

TEST(Rho, MsmSampleContributesMaxOfRatioAndReciprocal) {
  // Mixture ratio 1.5 at pi = 0.5 corresponds to r = (1.5 - 0.5) / 0.5 = 2.
  const std::vector<double> log_r = {std::log(2.0), 0.0};
  EXPECT_NEAR(constraint_from_log_ratios<double>(make_spec(ModelKind::msm, 3.0), log_r, 0.5), 2.0, 1e-12);
  const std::vector<double> inv = {-std::log(2.0)};
  EXPECT_NEAR(constraint_from_log_ratios<double>(make_spec(ModelKind::msm, 3.0), inv, 0.5), 2.0, 1e-12);
}

TEST(Constraint, IdentityStage2CollapsesEverySpec) {
  flow::FlowConfig cfg;
  const flow::ConditionalFlow identity = flow::ConditionalFlow::identity(cfg, 3);
  const std::vector<double> ctx = {0.2, 1.0};
  const Matrix latent = standard_normal_draws(500, 1, 4);
  for (const SensitivitySpec& s : all_specs()) {
    for (std::optional<double> pi : {std::optional<double>(0.4), std::optional<double>()}) {
      EXPECT_NEAR(constraint_estimate(s, identity, ctx, latent, pi), s.unconfounded_value(), 1e-6) << s.label();
    }
  }
}

TEST(Constraint, KlMatchesClosedFormGaussianShift) {
  const double mu = 0.5;
  const std::vector<double> log_r = shift_log_ratios(mu, 10000, 5);
  const double forward = 0.5 * mu * mu;
  const double reverse = 1.5 * mu * mu * std::exp(mu * mu);
  const double expected = std::max(forward, reverse);
  const double d = constraint_from_log_ratios<double>(make_spec(ModelKind::f, 1.0, FDivergence::kl), log_r, std::nullopt);
  EXPECT_LE(std::fabs(d - expected) / expected, 0.05) << d << " vs " << expected;
}

TEST(Constraint, ChiSquareMatchesClosedFormGaussianShift) {
  const double mu = 0.5;
  const std::vector<double> log_r = shift_log_ratios(mu, 10000, 6);
  const double forward = std::exp(mu * mu) - 1.0;
  const double reverse = std::exp(3 * mu * mu) - 2 * std::exp(mu * mu) + 1.0;
  const double expected = std::max(forward, reverse);
  const double d =
      constraint_from_log_ratios<double>(make_spec(ModelKind::f, 1.0, FDivergence::chi2), log_r, std::nullopt);
  EXPECT_LE(std::fabs(d - expected) / expected, 0.05) << d << " vs " << expected;
}

TEST(Constraint, SmallAndLargeSampleEstimatesAgreeWithinThreeStandardErrors) {
  const double mu = 0.5;
  const SensitivitySpec kl = make_spec(ModelKind::f, 1.0, FDivergence::kl);
  const std::vector<double> small = shift_log_ratios(mu, 100, 7);
  const std::vector<double> large = shift_log_ratios(mu, 10000, 8);
  // Standard error of the dominant (reverse) direction at k = 100.
  double mean = 0.0;
  double sq = 0.0;
  for (double lr : small) {
    const double v = std::exp(-lr) * (-lr);
    mean += v;
    sq += v * v;
  }
  mean /= 100.0;
  const double se = std::sqrt((sq / 100.0 - mean * mean) / 99.0);
  const double d_small = constraint_from_log_ratios<double>(kl, small, std::nullopt);
  const double d_large = constraint_from_log_ratios<double>(kl, large, std::nullopt);
  EXPECT_LE(std::fabs(d_small - d_large), 3.0 * se);
}

TEST(Constraint, ReciprocalSymmetryForSupremumModels) {
  const std::vector<double> log_r = shift_log_ratios(0.7, 300, 9);
  std::vector<double> flipped(log_r.size());
  for (std::size_t j = 0; j < log_r.size(); ++j) flipped[j] = -log_r[j];
  for (ModelKind k : {ModelKind::msm, ModelKind::cmsm, ModelKind::rosenbaum}) {
    const SensitivitySpec s = make_spec(k, 2.0);
    EXPECT_NEAR(constraint_from_log_ratios<double>(s, log_r, std::nullopt),
                constraint_from_log_ratios<double>(s, flipped, std::nullopt), 1e-12);
  }
}

TEST(Constraint, RosenbaumEqualsBruteForceOverAllPairs) {
  const std::vector<double> log_r = shift_log_ratios(0.4, 60, 10);
  const double pi = 0.35;
  double brute = 0.0;
  for (double l1 : log_r) {
    for (double l2 : log_r) {
      // Mixture ratio P(u|x)/P(u|x,a) = pi + (1 - pi) r.
      const double rho = rho_pairwise(pi + (1 - pi) * std::exp(l1), pi + (1 - pi) * std::exp(l2), pi);
      brute = std::max({brute, rho, 1.0 / rho});
    }
  }
  EXPECT_NEAR(constraint_from_log_ratios<double>(make_spec(ModelKind::rosenbaum, 2.0), log_r, pi), brute, 1e-9);
}

TEST(Constraint, MsmEqualsBruteForceLemmaFormula) {
  const std::vector<double> log_r = shift_log_ratios(0.6, 80, 11);
  const double pi = 0.62;
  double brute = 0.0;
  for (double l : log_r) {
    const double rho = rho_pointwise(SensitivitySpec{}, pi + (1 - pi) * std::exp(l), pi);
    brute = std::max({brute, rho, 1.0 / rho});
  }
  EXPECT_NEAR(constraint_from_log_ratios<double>(make_spec(ModelKind::msm, 2.0), log_r, pi), brute, 1e-9);
}

TEST(Constraint, WeightedMsmWithDefaultWeightEqualsMsm) {
  const std::vector<double> log_r = shift_log_ratios(0.6, 80, 12);
  EXPECT_NEAR(constraint_from_log_ratios<double>(make_spec(ModelKind::wmsm, 2.0), log_r, 0.3),
              constraint_from_log_ratios<double>(make_spec(ModelKind::msm, 2.0), log_r, 0.3), 1e-12);
  SensitivitySpec half = make_spec(ModelKind::wmsm, 2.0);
  half.weight = Expression("0.5 * pi");
  double brute = 0.0;
  for (double l : log_r) {
    const double q = 0.15;
    const double rho = (0.3 + 0.7 * std::exp(l) - q) / (1 - q);
    brute = std::max({brute, rho, 1.0 / rho});
  }
  EXPECT_NEAR(constraint_from_log_ratios<double>(half, log_r, 0.3), brute, 1e-12);
}

TEST(Constraint, GradientFlowsThroughArgmaxSample) {
  ad::Tape tape;
  ad::TapeScope scope(tape);
  const std::vector<ad::Var> lr = tape.variables(std::vector<double>{0.1, -0.5, 0.3});
  const ad::Var d = constraint_from_log_ratios<ad::Var>(make_spec(ModelKind::msm, 2.0), lr, 0.5);
  const std::vector<double> g = tape.gradient(d, lr);
  EXPECT_DOUBLE_EQ(g[0], 0.0);
  EXPECT_NEAR(g[1], -std::exp(0.5), 1e-12);
  EXPECT_DOUBLE_EQ(g[2], 0.0);
}

TEST(FFunctions, VanishAtOneAndAreConvex) {
  for (FDivergence f : {FDivergence::kl, FDivergence::tv, FDivergence::he, FDivergence::chi2}) {
    EXPECT_DOUBLE_EQ(f_value<double>(f, 1.0), 0.0);
    for (double x = 0.1; x < 5.0; x += 0.1) {
      const double mid = f_value<double>(f, x + 0.05);
      EXPECT_LE(mid, 0.5 * (f_value<double>(f, x) + f_value<double>(f, x + 0.1)) + 1e-12);
    }
  }
}

TEST(Spec, JsonRoundTripAndValidation) {
  const auto s = spec_from_json(nlohmann::json::parse(R"({"kind":"f","f":"chi2","gamma":0.3})"));
  EXPECT_EQ(s.kind, ModelKind::f);
  EXPECT_EQ(s.f, FDivergence::chi2);
  EXPECT_EQ(spec_from_json(to_json(s)), s);
  EXPECT_THROW((void)spec_from_json(nlohmann::json::parse(R"({"kind":"msm","gamma":0.5})")), Error);
  EXPECT_THROW((void)spec_from_json(nlohmann::json::parse(R"({"kind":"f","f":"js","gamma":0.5})")), Error);
  const auto w = spec_from_json(nlohmann::json::parse(R"j({"kind":"wmsm","gamma":2,"weight":"min(pi, 0.5)"})j"));
  EXPECT_DOUBLE_EQ(w.weight(0.8), 0.5);
}

TEST(Expression, ParsesArithmetic) {
  EXPECT_DOUBLE_EQ(Expression("pi")(0.3), 0.3);
  EXPECT_DOUBLE_EQ(Expression("1 - 2 * pi ^ 2")(0.5), 0.5);
  EXPECT_DOUBLE_EQ(Expression("-(pi + 1) / 2")(1.0), -1.0);
  EXPECT_NEAR(Expression("sqrt(pi) * exp(0) + log(1) + abs(-pi)")(0.25), 0.75, 1e-15);
  EXPECT_THROW(Expression("pi +"), Error);
  EXPECT_THROW(Expression("foo(pi)"), Error);
  EXPECT_THROW(Expression("min(pi)"), Error);
}

TEST(ClosedForm, GammaOneIsTheObservationalMean) {
  const auto m = standard_normal_stage1();
  const std::vector<double> x = {0.0};
  for (Direction d : {Direction::upper, Direction::lower}) {
    EXPECT_NEAR(closed_form_msm_bound(m, x, 1.0, 1.0, d, 0.5), 0.0, 1e-6);
  }
}

TEST(ClosedForm, StandardNormalUpperBound) {
  const auto m = standard_normal_stage1();
  const std::vector<double> x = {0.0};
  const boost::math::normal_distribution<double> nd;
  const double t = boost::math::quantile(nd, 2.0 / 3.0);
  const double expected = 0.75 * boost::math::pdf(nd, t);
  EXPECT_NEAR(expected, 0.273, 5e-4);
  EXPECT_NEAR(closed_form_msm_bound(m, x, 1.0, 2.0, Direction::upper, 0.5), expected, 1e-4);
  EXPECT_NEAR(closed_form_msm_bound(m, x, 1.0, 2.0, Direction::lower, 0.5), -expected, 1e-4);
}

TEST(ClosedForm, RespectsOutcomeStandardization) {
  auto m = standard_normal_stage1();
  m.outcome = {{3.0}, {2.0}};
  const std::vector<double> x = {0.0};
  const double base = closed_form_msm_bound(standard_normal_stage1(), x, 1.0, 4.0, Direction::upper, 0.3);
  EXPECT_NEAR(closed_form_msm_bound(m, x, 1.0, 4.0, Direction::upper, 0.3), 3.0 + 2.0 * base, 1e-9);
}

TEST(ClosedForm, SymmetricDensityGivesSymmetricBounds) {
  const auto m = standard_normal_stage1();
  const std::vector<double> x = {0.4};
  for (double g : {1.5, 3.0, 8.0}) {
    EXPECT_NEAR(closed_form_msm_bound(m, x, 1.0, g, Direction::upper, 0.3),
                -closed_form_msm_bound(m, x, 1.0, g, Direction::lower, 0.3), 1e-6);
  }
}

TEST(ClosedForm, CutoffIdentityHolds) {
  for (double pi = 0.05; pi < 1.0; pi += 0.1) {
    for (double g : {1.0, 1.3, 2.0, 7.0, 50.0}) {
      for (Direction d : {Direction::upper, Direction::lower}) {
        const StepWeights w = msm_step_weights(g, pi, d);
        EXPECT_NEAR(w.low * w.cutoff + w.high * (1.0 - w.cutoff), 1.0, 1e-14);
      }
    }
  }
}

TEST(ClosedForm, MonotoneInGamma) {
  const auto m = ncsa::testing::random_flow(flow::FlowConfig{}, 13, 0.3);
  const observational::Stage1Model s1{m, data::Standardizer::identity(1), true, 0, 0.0, 0.0, 0};
  const std::vector<double> x = {0.1};
  double prev_up = -1e9;
  double prev_lo = 1e9;
  for (double g : {1.0, 1.5, 2.0, 4.0, 10.0}) {
    const double up = closed_form_msm_bound(s1, x, 0.0, g, Direction::upper, 0.4);
    const double lo = closed_form_msm_bound(s1, x, 0.0, g, Direction::lower, 0.4);
    EXPECT_GE(up, prev_up);
    EXPECT_LE(lo, prev_lo);
    EXPECT_LE(lo, up);
    prev_up = up;
    prev_lo = lo;
  }
}

TEST(ClosedForm, ContinuousTreatmentUsesPureRatioWeights) {
  const auto m = standard_normal_stage1();
  const std::vector<double> x = {0.0};
  const boost::math::normal_distribution<double> nd;
  const double t = boost::math::quantile(nd, 2.0 / 3.0);
  EXPECT_NEAR(closed_form_msm_bound(m, x, 0.5, 2.0, Direction::upper, std::nullopt), 1.5 * boost::math::pdf(nd, t),
              1e-4);
}

TEST(ClosedForm, NarrowGridIsAQuadratureError) {
  const auto m = standard_normal_stage1();
  const std::vector<double> x = {0.0};
  QuadratureConfig q;
  q.lo = -1.0;
  q.hi = 1.0;
  try {
    (void)closed_form_msm_bound(m, x, 1.0, 2.0, Direction::upper, 0.5, q);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::quadrature);
  }
}
