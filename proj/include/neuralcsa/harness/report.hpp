#pragma once

// Evaluation report: coverage, interval lengths, closed-form gaps and
// constraint checks, grouped by (target, model, gamma, arm).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "neuralcsa/datagen/oracle.hpp"
#include "neuralcsa/flow/checkpoint.hpp"
#include "neuralcsa/harness/manifest.hpp"
#include "neuralcsa/harness/pipeline.hpp"
#include "neuralcsa/harness/table.hpp"

namespace ncsa::harness {

inline constexpr double kCoverageStandardErrors = 2.0;
inline constexpr const char* kCoverageDefinition =
    "fraction of evaluation points whose closed interval [lower - 2 SE_lower, upper + 2 SE_upper] contains the ground "
    "truth; SE is the Monte-Carlo standard error of each bound";

/// Interval at one point for one target (a potential outcome or a CATE).
struct IntervalRow {
  std::string target;  // "outcome" (E[Y(a)|x] or dose-response) or "cate"
  std::string model;
  double gamma = 0.0;
  bool gamma_oracle = false;
  double a = 0.0;      // NaN for CATE rows
  int repeat = 0;
  std::size_t unit = 0;
  double x1 = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double lower_se = 0.0;
  double upper_se = 0.0;
  double truth = kNotApplicable;
  double cf_lower = kNotApplicable;
  double cf_upper = kNotApplicable;
  double d_max = 0.0;
  bool accepted = true;

  [[nodiscard]] double length() const { return upper - lower; }
  [[nodiscard]] bool has_truth() const { return !std::isnan(truth); }
  [[nodiscard]] bool covers() const {
    return truth >= lower - kCoverageStandardErrors * lower_se && truth <= upper + kCoverageStandardErrors * upper_se;
  }
  [[nodiscard]] bool negative_beyond_noise() const {
    return length() < -kCoverageStandardErrors * std::hypot(lower_se, upper_se);
  }
};

/// Per-arm rows plus CATE rows from pairing arms 0 and 1 of binary treatments.
inline std::vector<IntervalRow> interval_rows(const std::vector<BoundsRow>& bounds, bool binary_treatment) {
  std::vector<IntervalRow> rows;
  using Key = std::tuple<std::string, double, int, std::size_t>;
  std::map<Key, const BoundsRow*> arm0;
  std::map<Key, const BoundsRow*> arm1;
  for (const BoundsRow& b : bounds) {
    rows.push_back({"outcome", b.model, b.gamma, b.gamma_oracle, b.a, b.repeat, b.unit, b.x.at(0), b.bounds.lower,
                    b.bounds.upper, b.bounds.lower_se, b.bounds.upper_se, b.truth, b.cf_lower, b.cf_upper,
                    std::max(b.bounds.d_lower, b.bounds.d_upper), b.accepted_lower && b.accepted_upper});
    if (binary_treatment) (b.a == 1.0 ? arm1 : arm0)[Key{b.model, b.gamma, b.repeat, b.unit}] = &b;
  }
  for (const auto& [key, t] : arm1) {
    const auto it = arm0.find(key);
    if (it == arm0.end()) continue;
    const BoundsRow& c = *it->second;
    IntervalRow r{"cate", t->model, t->gamma, t->gamma_oracle, kNotApplicable, t->repeat, t->unit, t->x.at(0),
                  t->bounds.lower - c.bounds.upper, t->bounds.upper - c.bounds.lower,
                  std::hypot(t->bounds.lower_se, c.bounds.upper_se), std::hypot(t->bounds.upper_se, c.bounds.lower_se),
                  t->truth - c.truth, t->cf_lower - c.cf_upper, t->cf_upper - c.cf_lower,
                  std::max({t->bounds.d_lower, t->bounds.d_upper, c.bounds.d_lower, c.bounds.d_upper}),
                  t->accepted_lower && t->accepted_upper && c.accepted_lower && c.accepted_upper};
    rows.push_back(r);
  }
  return rows;
}

inline double median_of(std::vector<double> v) { return v.empty() ? kNotApplicable : datagen::median(std::move(v)); }

/// Summary for one (target, model, gamma, arm) group.
struct ReportRow {
  std::string target;
  std::string model;
  double gamma = 0.0;
  bool gamma_oracle = false;
  double a = kNotApplicable;
  std::size_t points = 0;             // per repeat
  int repeats = 0;
  double coverage = kNotApplicable;   // pooled over repeats
  double median_length_points = 0.0;  // median over points, pooled over repeats
  double median_length_runs = 0.0;   // median over repeats of the per-repeat mean length
  double mean_length = 0.0;
  double min_length = 0.0;
  double max_length = 0.0;
  std::size_t negative_lengths = 0;   // below -2 SE
  double cf_gap = kNotApplicable;     // mean |bound - closed form| in standardized units, both bounds
  double max_constraint_ratio = 0.0;  // max D / gamma (max D when gamma = 0)
  std::size_t accepted_points = 0;
  std::size_t violating_points = 0;   // accepted and D > gamma (1 + eps)
};

/// `outcome_scale` converts closed-form gaps to standardized units.
inline std::vector<ReportRow> summarize(const std::vector<IntervalRow>& rows, double outcome_scale,
                                        double eps_constraint) {
  using Key = std::tuple<std::string, std::string, double, double>;
  std::map<Key, std::vector<const IntervalRow*>> groups;
  for (const IntervalRow& r : rows) groups[Key{r.target, r.model, r.gamma, std::isnan(r.a) ? -1e300 : r.a}].push_back(&r);
  std::vector<ReportRow> out;
  for (const auto& [key, members] : groups) {
    ReportRow s;
    s.target = std::get<0>(key);
    s.model = std::get<1>(key);
    s.gamma = std::get<2>(key);
    s.a = members.front()->a;
    s.gamma_oracle = members.front()->gamma_oracle;
    std::map<int, std::vector<double>> by_repeat;
    std::vector<double> lengths;
    std::size_t truths = 0;
    std::size_t covered = 0;
    double gap = 0.0;
    std::size_t gaps = 0;
    for (const IntervalRow* r : members) {
      lengths.push_back(r->length());
      by_repeat[r->repeat].push_back(r->length());
      if (r->has_truth()) {
        ++truths;
        covered += r->covers() ? 1 : 0;
      }
      if (r->negative_beyond_noise()) ++s.negative_lengths;
      if (!std::isnan(r->cf_lower) && !std::isnan(r->cf_upper)) {
        gap += std::fabs(r->lower - r->cf_lower) + std::fabs(r->upper - r->cf_upper);
        gaps += 2;
      }
      const double ratio = s.gamma > 0.0 ? r->d_max / s.gamma : r->d_max;
      s.max_constraint_ratio = std::max(s.max_constraint_ratio, ratio);
      if (r->accepted) {
        ++s.accepted_points;
        if (r->d_max > s.gamma * (1.0 + eps_constraint)) ++s.violating_points;
      }
    }
    s.repeats = static_cast<int>(by_repeat.size());
    s.points = members.size() / by_repeat.size();
    if (truths > 0) s.coverage = static_cast<double>(covered) / static_cast<double>(truths);
    s.median_length_points = median_of(lengths);
    std::vector<double> run_means;
    for (const auto& [rep, v] : by_repeat) {
      double m = 0.0;
      for (double l : v) m += l;
      run_means.push_back(m / static_cast<double>(v.size()));
    }
    s.median_length_runs = median_of(run_means);
    double total = 0.0;
    for (double l : lengths) total += l;
    s.mean_length = total / static_cast<double>(lengths.size());
    s.min_length = *std::min_element(lengths.begin(), lengths.end());
    s.max_length = *std::max_element(lengths.begin(), lengths.end());
    if (gaps > 0) s.cf_gap = gap / static_cast<double>(gaps) / outcome_scale;
    out.push_back(s);
  }
  return out;
}

inline nlohmann::json to_json(const ReportRow& r) {
  return {{"target", r.target},
          {"model", r.model},
          {"gamma", r.gamma},
          {"gamma_source", r.gamma_oracle ? "oracle" : "grid"},
          {"a", nan_to_null(r.a)},
          {"points", r.points},
          {"repeats", r.repeats},
          {"coverage", nan_to_null(r.coverage)},
          {"median_length_over_points", r.median_length_points},
          {"median_length_over_runs", r.median_length_runs},
          {"mean_length", r.mean_length},
          {"min_length", r.min_length},
          {"max_length", r.max_length},
          {"negative_lengths", r.negative_lengths},
          {"closed_form_gap", nan_to_null(r.cf_gap)},
          {"max_constraint_ratio", r.max_constraint_ratio},
          {"accepted_points", r.accepted_points},
          {"violating_points", r.violating_points}};
}

inline ReportRow report_row_from_json(const nlohmann::json& j) {
  ReportRow r;
  r.target = j.at("target").get<std::string>();
  r.model = j.at("model").get<std::string>();
  r.gamma = j.at("gamma").get<double>();
  r.gamma_oracle = j.at("gamma_source").get<std::string>() == "oracle";
  r.a = null_to_nan(j.at("a"));
  r.points = j.at("points").get<std::size_t>();
  r.repeats = j.at("repeats").get<int>();
  r.coverage = null_to_nan(j.at("coverage"));
  r.median_length_points = j.at("median_length_over_points").get<double>();
  r.median_length_runs = j.at("median_length_over_runs").get<double>();
  r.mean_length = j.at("mean_length").get<double>();
  r.min_length = j.at("min_length").get<double>();
  r.max_length = j.at("max_length").get<double>();
  r.negative_lengths = j.at("negative_lengths").get<std::size_t>();
  r.cf_gap = null_to_nan(j.at("closed_form_gap"));
  r.max_constraint_ratio = j.at("max_constraint_ratio").get<double>();
  r.accepted_points = j.at("accepted_points").get<std::size_t>();
  r.violating_points = j.at("violating_points").get<std::size_t>();
  return r;
}

/// Writes report.csv, report.json and intervals.csv; returns the summary rows.
inline std::vector<ReportRow> write_report(const Pipeline& p, const std::vector<BoundsRow>& bounds) {
  const Manifest& m = p.manifest();
  const std::vector<IntervalRow> rows = interval_rows(bounds, p.dataset().binary_treatment());
  const std::vector<ReportRow> summary =
      summarize(rows, p.stage1().outcome.scale.at(0), m.auglag.eps_constraint);

  Table intervals{{"manifest_hash", "experiment", "target", "model", "gamma", "gamma_source", "a", "repeat", "unit",
                   "x1", "lower", "upper", "length", "truth", "covered", "cf_lower", "cf_upper", "d_max", "accepted"},
                  {}};
  for (const IntervalRow& r : rows) {
    intervals.add(m.hash, m.experiment, r.target, r.model, r.gamma, r.gamma_oracle ? "oracle" : "grid", r.a, r.repeat,
                  r.unit, r.x1, r.lower, r.upper, r.length(), r.truth,
                  r.has_truth() ? cell(r.covers()) : std::string(), r.cf_lower, r.cf_upper, r.d_max, r.accepted);
  }
  intervals.write(p.out() / "intervals.csv");

  Table t{{"manifest_hash", "experiment", "target", "model", "gamma", "gamma_source", "a", "points", "repeats",
           "coverage", "median_length_over_points", "median_length_over_runs", "mean_length", "min_length",
           "max_length", "negative_lengths", "closed_form_gap", "max_constraint_ratio", "accepted_points",
           "violating_points"},
          {}};
  nlohmann::json js = nlohmann::json::array();
  for (const ReportRow& r : summary) {
    t.add(m.hash, m.experiment, r.target, r.model, r.gamma, r.gamma_oracle ? "oracle" : "grid", r.a, r.points,
          r.repeats, r.coverage, r.median_length_points, r.median_length_runs, r.mean_length, r.min_length,
          r.max_length, r.negative_lengths, r.cf_gap, r.max_constraint_ratio, r.accepted_points, r.violating_points);
    js.push_back(to_json(r));
  }
  t.write(p.out() / "report.csv");
  flow::write_json_file((p.out() / "report.json").string(),
                        {{"format_version", kManifestFormatVersion},
                         {"manifest_hash", m.hash},
                         {"experiment", m.experiment},
                         {"coverage_definition", kCoverageDefinition},
                         {"length_columns",
                          {{"median_length_over_points", "median interval length over evaluation points"},
                           {"median_length_over_runs", "median over repeats of the mean interval length"}}},
                         {"closed_form_gap_units", "standardized outcome units"},
                         {"seeds",
                          {{"manifest", m.seed},
                           {"data", m.seed_for("data")},
                           {"stage1", m.seed_for("stage1")},
                           {"propensity", m.seed_for("propensity")},
                           {"eval", m.seed_for("eval")}}},
                         {"rows", js}});
  return summary;
}

inline std::vector<ReportRow> read_report(const std::filesystem::path& path) {
  const nlohmann::json j = flow::read_json_file(path.string());
  std::vector<ReportRow> rows;
  for (const auto& r : j.at("rows")) rows.push_back(report_row_from_json(r));
  return rows;
}

}  // namespace ncsa::harness
