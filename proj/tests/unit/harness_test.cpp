#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "neuralcsa/harness/manifest.hpp"
#include "neuralcsa/harness/pipeline.hpp"
#include "neuralcsa/harness/report.hpp"

using namespace ncsa;
using namespace ncsa::harness;
namespace fs = std::filesystem;

namespace {

nlohmann::json minimal_manifest() {
  return nlohmann::json::parse(R"({
    "format_version": 1,
    "experiment": "unit",
    "seed": 3,
    "data": {"dgp": "binary", "config": {"n": 100}},
    "auglag": {"k": 16, "n1": 2, "n2": 3},
    "evaluation": {"k": 200, "point_stride": 2},
    "runs": [
      {"sensitivity": {"model": "msm"}, "gammas": [1, 2]},
      {"sensitivity": {"model": "f", "f": "kl"}, "gammas": "oracle"}
    ]
  })");
}

BoundsRow row(const std::string& model, double a, std::size_t unit, double lower, double upper, double truth) {
  BoundsRow b;
  b.model = model;
  b.gamma = 2.0;
  b.a = a;
  b.unit = unit;
  b.x = {0.1 * static_cast<double>(unit)};
  b.bounds = {lower, upper, 0.01, 0.02, 1.5, 1.8};
  b.truth = truth;
  b.cf_lower = lower - 0.1;
  b.cf_upper = upper + 0.1;
  b.feasible_upper = true;
  b.feasible_lower = true;
  return b;
}

}  // namespace

TEST(Manifest, ParsesRunsAndEvaluationSettings) {
  unsetenv(kOutputRootVariable);
  const Manifest m = manifest_from_json(minimal_manifest(), "/base");
  EXPECT_EQ(m.experiment, "unit");
  EXPECT_EQ(m.output, fs::path("runs/unit"));
  ASSERT_EQ(m.runs.size(), 2U);
  EXPECT_FALSE(m.runs[0].gammas.oracle);
  EXPECT_EQ(m.runs[0].gammas.grid, (std::vector<double>{1.0, 2.0}));
  EXPECT_TRUE(m.runs[1].gammas.oracle);
  EXPECT_EQ(m.evaluation.k, 200U);
  EXPECT_EQ(m.evaluation.constraint_k, 16U);  // defaults to the training k
  EXPECT_EQ(m.evaluation.point_stride, 2);
  EXPECT_EQ(m.resolve("x.csv"), fs::path("/base/x.csv"));
  EXPECT_EQ(m.resolve("/abs/x.csv"), fs::path("/abs/x.csv"));
}

TEST(Manifest, OutputRootOverride) {
  setenv(kOutputRootVariable, "/tmp/elsewhere", 1);
  const Manifest m = manifest_from_json(minimal_manifest(), ".");
  unsetenv(kOutputRootVariable);
  EXPECT_EQ(m.output, fs::path("/tmp/elsewhere/unit"));
}

TEST(Manifest, HashTracksContent) {
  const nlohmann::json a = minimal_manifest();
  nlohmann::json b = a;
  b["seed"] = 4;
  EXPECT_EQ(manifest_from_json(a, ".").hash, manifest_from_json(a, ".").hash);
  EXPECT_NE(manifest_from_json(a, ".").hash, manifest_from_json(b, ".").hash);
  EXPECT_EQ(manifest_from_json(a, ".").hash.size(), 16U);
}

TEST(Manifest, RejectsInvalidInput) {
  nlohmann::json j = minimal_manifest();
  j["format_version"] = 2;
  EXPECT_THROW(manifest_from_json(j, "."), Error);
  j = minimal_manifest();
  j["runs"][0]["gammas"] = "sometimes";
  EXPECT_THROW(manifest_from_json(j, "."), Error);
  j = minimal_manifest();
  j["runs"][0]["gammas"] = nlohmann::json::array();
  EXPECT_THROW(manifest_from_json(j, "."), Error);
  j = minimal_manifest();
  j["experiment"] = "a/b";
  EXPECT_THROW(manifest_from_json(j, "."), Error);
  j = minimal_manifest();
  j["runs"] = nlohmann::json::array();
  EXPECT_THROW(manifest_from_json(j, "."), Error);
}

TEST(Seeds, NamedSubSeedsAreStableAndDistinct) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(sub_seed(7, "data"), sub_seed(7, "data"));
  std::set<std::uint64_t> seen;
  for (const char* name : {"data", "stage1", "propensity", "eval"}) {
    for (std::uint64_t s : {1ULL, 2ULL}) seen.insert(sub_seed(s, name));
  }
  EXPECT_EQ(seen.size(), 8U);
}

TEST(Points, GridAndCsv) {
  const auto grid = points_from_argument("grid:5", 1);
  ASSERT_EQ(grid.size(), 5U);
  EXPECT_DOUBLE_EQ(grid.front().x[0], -1.0);
  EXPECT_DOUBLE_EQ(grid[2].x[0], 0.0);
  EXPECT_TRUE(std::isnan(grid[0].a));
  EXPECT_EQ(points_from_argument("grid", 1).size(), 101U);
  EXPECT_THROW(points_from_argument("grid", 2), Error);

  const fs::path path = fs::temp_directory_path() / "ncsa_points_test.csv";
  {
    std::ofstream out(path);
    out << "x1,x2,a\n0.5,-0.25,1\n1.5,2,0\n";
  }
  const auto pts = read_points(path.string(), 2);
  ASSERT_EQ(pts.size(), 2U);
  EXPECT_DOUBLE_EQ(pts[0].x[1], -0.25);
  EXPECT_DOUBLE_EQ(pts[0].a, 1.0);
  EXPECT_DOUBLE_EQ(pts[1].a, 0.0);
  EXPECT_THROW(read_points(path.string(), 4), Error);
  fs::remove(path);
}

TEST(Report, CateRowsCombineArms) {
  const std::vector<BoundsRow> bounds = {row("msm", 0.0, 0, 1.0, 2.0, 1.5), row("msm", 1.0, 0, 3.0, 5.0, 4.0),
                                         row("msm", 1.0, 1, 3.0, 5.0, 4.0)};
  const auto rows = interval_rows(bounds, true);
  ASSERT_EQ(rows.size(), 4U);  // three outcome rows and one matched CATE
  const IntervalRow& cate = rows.back();
  EXPECT_EQ(cate.target, "cate");
  EXPECT_DOUBLE_EQ(cate.lower, 3.0 - 2.0);
  EXPECT_DOUBLE_EQ(cate.upper, 5.0 - 1.0);
  EXPECT_DOUBLE_EQ(cate.truth, 2.5);
  EXPECT_DOUBLE_EQ(cate.lower_se, std::hypot(0.01, 0.02));
  EXPECT_DOUBLE_EQ(cate.cf_lower, 2.9 - 2.1);
  EXPECT_TRUE(std::isnan(cate.a));
  EXPECT_EQ(interval_rows(bounds, false).size(), 3U);
}

TEST(Report, CoverageUsesStandardErrorTolerance) {
  IntervalRow r;
  r.lower = 1.0;
  r.upper = 2.0;
  r.lower_se = 0.1;
  r.upper_se = 0.1;
  r.truth = 0.81;
  EXPECT_TRUE(r.covers());
  r.truth = 0.79;
  EXPECT_FALSE(r.covers());
  r.truth = 2.2;
  EXPECT_TRUE(r.covers());
  r.upper = 0.8;
  EXPECT_FALSE(r.negative_beyond_noise());
  r.upper = 0.7;
  EXPECT_TRUE(r.negative_beyond_noise());
}

TEST(Report, SummaryStatistics) {
  std::vector<BoundsRow> bounds;
  // Repeat 0 lengths 1, 2, 3; repeat 1 lengths 5, 5, 5. Truth 0 is covered only where lower <= 0.
  for (int rep = 0; rep < 2; ++rep) {
    for (std::size_t u = 0; u < 3; ++u) {
      const double len = rep == 0 ? static_cast<double>(u + 1) : 5.0;
      BoundsRow b = row("msm", 1.0, u, u == 0 ? 0.0 : 1.0, (u == 0 ? 0.0 : 1.0) + len, 0.0);
      b.repeat = rep;
      b.bounds.lower_se = 0.0;
      b.bounds.d_upper = u == 2 ? 2.5 : 1.0;
      bounds.push_back(b);
    }
  }
  const auto rows = summarize(interval_rows(bounds, false), 2.0, 0.05);
  ASSERT_EQ(rows.size(), 1U);
  const ReportRow& s = rows[0];
  EXPECT_EQ(s.points, 3U);
  EXPECT_EQ(s.repeats, 2);
  EXPECT_DOUBLE_EQ(s.coverage, 2.0 / 6.0);
  EXPECT_DOUBLE_EQ(s.median_length_points, 4.0);  // pooled {1, 2, 3, 5, 5, 5}
  EXPECT_DOUBLE_EQ(s.median_length_runs, 3.5);    // run means 2 and 5
  EXPECT_DOUBLE_EQ(s.min_length, 1.0);
  EXPECT_DOUBLE_EQ(s.max_length, 5.0);
  EXPECT_NEAR(s.cf_gap, 0.1 / 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(s.max_constraint_ratio, 2.5 / 2.0);
  EXPECT_EQ(s.accepted_points, 6U);
  EXPECT_EQ(s.violating_points, 2U);
  EXPECT_EQ(s.negative_lengths, 0U);
}

TEST(Serialization, BoundsRowRoundTripKeepsMissingValues) {
  BoundsRow b = row("f-kl", 1.0, 4, -1.0, 1.0, kNotApplicable);
  b.cf_lower = kNotApplicable;
  b.accepted_lower = false;
  const BoundsRow back = bounds_row_from_json(nlohmann::json::parse(to_json(b).dump()));
  EXPECT_EQ(back.model, "f-kl");
  EXPECT_EQ(back.unit, 4U);
  EXPECT_TRUE(std::isnan(back.truth));
  EXPECT_TRUE(std::isnan(back.cf_lower));
  EXPECT_DOUBLE_EQ(back.cf_upper, b.cf_upper);
  EXPECT_DOUBLE_EQ(back.bounds.upper_se, 0.02);
  EXPECT_FALSE(back.accepted_lower);
}

TEST(Names, ShortNumber) {
  EXPECT_EQ(short_number(2.0000000000000018), "2");
  EXPECT_EQ(short_number(0.25), "0.25");
  EXPECT_EQ(short_number(1234567.0), "1.23457e+06");
}
