#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "neuralcsa/data/dataset.hpp"
#include "neuralcsa/observational/propensity.hpp"
#include "neuralcsa/observational/stage1.hpp"

using namespace ncsa;
using observational::TrainConfig;

namespace {

// Y | x, a ~ N(x + a, 1) with x ~ U[-1, 1] and a ~ Bern(0.5).
data::Dataset gaussian_dataset(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-1.0, 1.0);
  std::bernoulli_distribution ua(0.5);
  std::normal_distribution<double> noise(0.0, 1.0);
  data::Dataset ds;
  ds.x = Matrix(n, 1);
  ds.y = Matrix(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    ds.x(i, 0) = ux(rng);
    ds.a.push_back(ua(rng) ? 1.0 : 0.0);
    ds.y(i, 0) = ds.x(i, 0) + ds.a[i] + noise(rng);
  }
  return ds;
}

data::Dataset binary_labels(std::size_t n, std::uint64_t seed, double (*prob)(double)) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-1.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  data::Dataset ds;
  ds.x = Matrix(n, 1);
  ds.y = Matrix(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    ds.x(i, 0) = ux(rng);
    ds.a.push_back(unif(rng) < prob(ds.x(i, 0)) ? 1.0 : 0.0);
  }
  return ds;
}

double normal_log_pdf(double y, double mean) { return -0.5 * (y - mean) * (y - mean) - flow::kLogSqrt2Pi; }

}  // namespace

TEST(Stage1, ZeroEpochsGivesIdentityFlow) {
  const data::Dataset ds = gaussian_dataset(200, 1);
  TrainConfig tc;
  tc.epochs = 0;
  const auto m = observational::fit_stage1(ds, flow::FlowConfig{}, tc);
  const std::vector<double> x = {0.3};
  const std::vector<double> u = {0.8};
  const auto r = flow::transform_forward(m.flow, u, x, 1.0);
  EXPECT_NEAR(r.value[0], 0.8, 1e-12);
  EXPECT_NEAR(r.log_det, 0.0, 1e-12);
}

TEST(Stage1, RecoversGaussianConditional) {
  const data::Dataset train = gaussian_dataset(3000, 2);
  const data::Dataset test = gaussian_dataset(2000, 3);
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 64;
  tc.lr = 5e-3;
  const auto m = observational::fit_stage1(train, flow::FlowConfig{}, tc);
  double model = 0.0;
  double truth = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const std::vector<double> y = {test.y(i, 0)};
    model += m.log_prob(y, test.x.row(i), test.a[i]);
    truth += normal_log_pdf(test.y(i, 0), test.x(i, 0) + test.a[i]);
  }
  model /= static_cast<double>(test.size());
  truth /= static_cast<double>(test.size());
  EXPECT_GT(model, truth - 0.08);
}

TEST(Stage1, ConcentratesOnNearConstantOutcome) {
  data::Dataset ds = gaussian_dataset(500, 4);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> jitter(0.0, 1e-3);
  for (double& y : ds.y.data) y = 2.5 + jitter(rng);
  TrainConfig tc;
  tc.epochs = 3;
  const auto m = observational::fit_stage1(ds, flow::FlowConfig{}, tc);
  double model = 0.0;
  double baseline = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    const double y = 2.5 + jitter(rng);
    const std::vector<double> yv = {y};
    model += m.log_prob(yv, ds.x.row(i), ds.a[i]);
    baseline += normal_log_pdf(y, 0.0);
  }
  EXPECT_GE((model - baseline) / 100.0, 2.0);
}

TEST(Stage1, CheckpointRoundTrip) {
  const data::Dataset ds = gaussian_dataset(300, 5);
  TrainConfig tc;
  tc.epochs = 1;
  const auto m = observational::fit_stage1(ds, flow::FlowConfig{}, tc);
  const auto back = observational::stage1_from_json(nlohmann::json::parse(observational::to_json(m).dump()));
  EXPECT_EQ(back.outcome.mean, m.outcome.mean);
  EXPECT_EQ(back.outcome.scale, m.outcome.scale);
  const std::vector<double> y = {0.4};
  const std::vector<double> x = {0.1};
  EXPECT_EQ(back.log_prob(y, x, 1.0), m.log_prob(y, x, 1.0));
}

TEST(Stage1, TrainingIsDeterministic) {
  const data::Dataset ds = gaussian_dataset(300, 6);
  TrainConfig tc;
  tc.epochs = 2;
  tc.seed = 17;
  const auto a = observational::fit_stage1(ds, flow::FlowConfig{}, tc);
  const auto b = observational::fit_stage1(ds, flow::FlowConfig{}, tc);
  ASSERT_EQ(a.flow.parameters().size(), b.flow.parameters().size());
  for (std::size_t i = 0; i < a.flow.parameters().size(); ++i) EXPECT_EQ(a.flow.parameters()[i], b.flow.parameters()[i]);
}

TEST(Propensity, RecoversLogisticPropensityAtZero) {
  const data::Dataset ds = binary_labels(5000, 7, [](double x) { return 0.25 + 0.5 / (1.0 + std::exp(-3.0 * x)); });
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 64;
  const auto m = observational::fit_propensity(ds, {}, tc);
  const std::vector<double> x0 = {0.0};
  EXPECT_NEAR(m.treated_probability(x0), 0.5, 0.05);
  EXPECT_NEAR(m.probability(x0, 0.0) + m.probability(x0, 1.0), 1.0, 1e-12);
}

TEST(Propensity, ConstantPropensity) {
  const data::Dataset ds = binary_labels(20000, 8, [](double) { return 0.7; });
  TrainConfig tc;
  tc.epochs = 10;
  const auto m = observational::fit_propensity(ds, {}, tc);
  for (double x = -1.0; x <= 1.0; x += 0.25) {
    const std::vector<double> xv = {x};
    EXPECT_NEAR(m.treated_probability(xv), 0.7, 0.03) << x;
  }
}

TEST(Propensity, SeparableDataIsClamped) {
  const data::Dataset ds = binary_labels(2000, 9, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
  TrainConfig tc;
  tc.epochs = 40;
  tc.lr = 5e-3;
  const auto m = observational::fit_propensity(ds, {}, tc);
  for (double x : {-0.9, 0.9}) {
    const std::vector<double> xv = {x};
    const double p = m.treated_probability(xv);
    EXPECT_GE(p, 1e-3);
    EXPECT_LE(p, 1.0 - 1e-3);
  }
  const std::vector<double> hi = {0.9};
  EXPECT_DOUBLE_EQ(m.treated_probability(hi), 1.0 - 1e-3);
}

TEST(Propensity, SingleClassIsRejected) {
  const data::Dataset ds = binary_labels(100, 10, [](double) { return 1.0; });
  try {
    (void)observational::fit_propensity(ds, {}, {});
    FAIL() << "expected positivity error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::positivity);
  }
}

TEST(Propensity, ContinuousDensityIsPositiveAndNormalized) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ux(-1.0, 1.0);
  std::gamma_distribution<double> g(3.0, 1.0);
  data::Dataset ds;
  ds.x = Matrix(2000, 1);
  ds.y = Matrix(2000, 1);
  for (std::size_t i = 0; i < 2000; ++i) {
    ds.x(i, 0) = ux(rng);
    const double g1 = g(rng);
    const double g2 = g(rng);
    ds.a.push_back(g1 / (g1 + g2));
  }
  TrainConfig tc;
  tc.epochs = 5;
  const auto m = observational::fit_propensity(ds, {}, tc);
  EXPECT_FALSE(m.binary());
  const std::vector<double> x = {0.2};
  double mass = 0.0;
  for (double a = -3.0; a < 4.0; a += 1e-3) {
    const double p = m.probability(x, a + 5e-4);
    EXPECT_GT(p, 0.0);
    mass += p * 1e-3;
  }
  EXPECT_NEAR(mass, 1.0, 0.01);
  const auto back = observational::PropensityModel::from_json(nlohmann::json::parse(m.to_json().dump()));
  EXPECT_EQ(back.probability(x, 0.4), m.probability(x, 0.4));
}

TEST(Dataset, CsvRoundTripIsExact) {
  const data::Dataset ds = gaussian_dataset(50, 12);
  const std::string path = ::testing::TempDir() + "/ds.csv";
  data::write_csv(ds, path);
  const data::Dataset back = data::read_csv(path);
  EXPECT_EQ(back.x, ds.x);
  EXPECT_EQ(back.y, ds.y);
  EXPECT_EQ(back.a, ds.a);
  EXPECT_TRUE(back.binary_treatment());
}

TEST(Dataset, MalformedCsvIsRejected) {
  const std::string path = ::testing::TempDir() + "/bad.csv";
  {
    std::ofstream f(path);
    f << "x_1,a,y_1\n0.1,1,abc\n";
  }
  EXPECT_THROW((void)data::read_csv(path), Error);
  {
    std::ofstream f(path);
    f << "a,x_1,y_1\n1,0.1,0.2\n";
  }
  EXPECT_THROW((void)data::read_csv(path), Error);
}
