#pragma once

// Manifest pipeline: data and ground truth, Stage 1, propensity, Stage-2
// trainings, bounds at evaluation points. Every artifact lands in the
// manifest's output directory; checkpoints carry the manifest hash and are
// reused only when it matches.

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuralcsa/data/dataset.hpp"
#include "neuralcsa/datagen/binary.hpp"
#include "neuralcsa/datagen/continuous.hpp"
#include "neuralcsa/datagen/ground_truth.hpp"
#include "neuralcsa/datagen/semisynthetic.hpp"
#include "neuralcsa/error.hpp"
#include "neuralcsa/flow/checkpoint.hpp"
#include "neuralcsa/harness/manifest.hpp"
#include "neuralcsa/harness/table.hpp"
#include "neuralcsa/observational/propensity.hpp"
#include "neuralcsa/observational/stage1.hpp"
#include "neuralcsa/sensitivity/closed_form.hpp"
#include "neuralcsa/stage2/bounds.hpp"
#include "neuralcsa/stage2/trainer.hpp"

namespace ncsa::harness {

inline constexpr double kNotApplicable = std::numeric_limits<double>::quiet_NaN();

/// One trained upper/lower pair.
struct TrainedRun {
  std::string model;
  nlohmann::json sensitivity;  // with gamma
  double gamma = 0.0;
  bool gamma_oracle = false;
  double a = 0.0;
  int repeat = 0;
  std::string upper_path;
  std::string lower_path;
  bool feasible_upper = true;
  bool feasible_lower = true;
};

inline nlohmann::json to_json(const TrainedRun& r) {
  return {{"model", r.model},           {"sensitivity", r.sensitivity},   {"gamma", r.gamma},
          {"gamma_oracle", r.gamma_oracle}, {"a", r.a},                   {"repeat", r.repeat},
          {"upper", r.upper_path},      {"lower", r.lower_path},          {"feasible_upper", r.feasible_upper},
          {"feasible_lower", r.feasible_lower}};
}

inline TrainedRun trained_run_from_json(const nlohmann::json& j) {
  return {j.at("model").get<std::string>(),  j.at("sensitivity"),
          j.at("gamma").get<double>(),       j.at("gamma_oracle").get<bool>(),
          j.at("a").get<double>(),           j.at("repeat").get<int>(),
          j.at("upper").get<std::string>(),  j.at("lower").get<std::string>(),
          j.at("feasible_upper").get<bool>(), j.at("feasible_lower").get<bool>()};
}

/// Bounds at one evaluation point for one trained pair.
struct BoundsRow {
  std::string model;
  double gamma = 0.0;
  bool gamma_oracle = false;
  double a = 0.0;
  int repeat = 0;
  std::size_t unit = 0;
  std::vector<double> x;
  stage2::BoundsResult bounds;
  double truth = kNotApplicable;
  double cf_lower = kNotApplicable;
  double cf_upper = kNotApplicable;
  bool feasible_upper = true;
  bool feasible_lower = true;
  // Feasible and D <= gamma (1 + eps) at every evaluation point of the run, on fresh draws.
  bool accepted_upper = true;
  bool accepted_lower = true;
};

inline nlohmann::json nan_to_null(double v) { return std::isnan(v) ? nlohmann::json() : nlohmann::json(v); }
inline double null_to_nan(const nlohmann::json& v) { return v.is_null() ? kNotApplicable : v.get<double>(); }

inline nlohmann::json to_json(const BoundsRow& r) {
  return {{"model", r.model},
          {"gamma", r.gamma},
          {"gamma_oracle", r.gamma_oracle},
          {"a", r.a},
          {"repeat", r.repeat},
          {"unit", r.unit},
          {"x", r.x},
          {"lower", r.bounds.lower},
          {"upper", r.bounds.upper},
          {"lower_se", r.bounds.lower_se},
          {"upper_se", r.bounds.upper_se},
          {"d_lower", r.bounds.d_lower},
          {"d_upper", r.bounds.d_upper},
          {"truth", nan_to_null(r.truth)},
          {"cf_lower", nan_to_null(r.cf_lower)},
          {"cf_upper", nan_to_null(r.cf_upper)},
          {"feasible_upper", r.feasible_upper},
          {"feasible_lower", r.feasible_lower},
          {"accepted_upper", r.accepted_upper},
          {"accepted_lower", r.accepted_lower}};
}

inline BoundsRow bounds_row_from_json(const nlohmann::json& j) {
  BoundsRow r;
  r.model = j.at("model").get<std::string>();
  r.gamma = j.at("gamma").get<double>();
  r.gamma_oracle = j.at("gamma_oracle").get<bool>();
  r.a = j.at("a").get<double>();
  r.repeat = j.at("repeat").get<int>();
  r.unit = j.at("unit").get<std::size_t>();
  r.x = j.at("x").get<std::vector<double>>();
  r.bounds = {j.at("lower").get<double>(),   j.at("upper").get<double>(),   j.at("lower_se").get<double>(),
              j.at("upper_se").get<double>(), j.at("d_lower").get<double>(), j.at("d_upper").get<double>()};
  r.truth = null_to_nan(j.at("truth"));
  r.cf_lower = null_to_nan(j.at("cf_lower"));
  r.cf_upper = null_to_nan(j.at("cf_upper"));
  r.feasible_upper = j.at("feasible_upper").get<bool>();
  r.feasible_lower = j.at("feasible_lower").get<bool>();
  r.accepted_upper = j.at("accepted_upper").get<bool>();
  r.accepted_lower = j.at("accepted_lower").get<bool>();
  return r;
}

/// Evaluation points read from a CSV with columns x_1..x_d and optionally a.
inline std::vector<stage2::EvaluationPoint> read_points(const std::string& path, int d_x) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io, "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::io, path + ": empty points file");
  const std::size_t cols = data::split_csv_line(line).size();
  const auto dx = static_cast<std::size_t>(d_x);
  require(cols == dx || cols == dx + 1, ErrorCode::dimension_mismatch,
          path + ": expected " + std::to_string(d_x) + " covariate columns (plus optional a)");
  std::vector<stage2::EvaluationPoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = data::split_csv_line(line);
    require(f.size() == cols, ErrorCode::io, path + ": ragged row");
    stage2::EvaluationPoint p;
    for (std::size_t j = 0; j < dx; ++j) p.x.push_back(data::parse_double(f[j], path));
    p.a = cols > dx ? data::parse_double(f[dx], path) : std::numeric_limits<double>::quiet_NaN();
    out.push_back(std::move(p));
  }
  return out;
}

/// "grid" or "grid:N" (d_x = 1, x in [-1, 1]) or a CSV path.
inline std::vector<stage2::EvaluationPoint> points_from_argument(const std::string& arg, int d_x) {
  if (arg.rfind("grid", 0) == 0) {
    require(d_x == 1, ErrorCode::dimension_mismatch, "points: grid needs a single covariate");
    const int n = arg.size() > 5 ? std::stoi(arg.substr(5)) : 101;
    std::vector<stage2::EvaluationPoint> out;
    for (double x : datagen::linear_grid(-1.0, 1.0, n)) {
      out.push_back({{x}, std::numeric_limits<double>::quiet_NaN()});
    }
    return out;
  }
  return read_points(arg, d_x);
}

/// Six significant digits; for file names only.
inline std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

class Pipeline {
 public:
  explicit Pipeline(Manifest m) : m_(std::move(m)) {}

  [[nodiscard]] const Manifest& manifest() const { return m_; }
  [[nodiscard]] const std::filesystem::path& out() const { return m_.output; }
  [[nodiscard]] const data::Dataset& dataset() const { return data_; }
  [[nodiscard]] const std::optional<datagen::GroundTruth>& truth() const { return truth_; }
  [[nodiscard]] const observational::Stage1Model& stage1() const { return *stage1_; }
  [[nodiscard]] const stage2::PropensityFn& propensity() const { return propensity_fn_; }

  /// Data, ground truth, Stage 1 and propensity.
  void prepare() {
    std::filesystem::create_directories(out());
    prepare_data();
    prepare_stage1();
    prepare_propensity();
  }

  std::vector<TrainedRun> train_all() {
    std::vector<TrainedRun> runs;
    Table traces{{"manifest_hash", "experiment", "model", "gamma", "a", "direction", "repeat", "outer", "mu",
                  "mean_lambda", "mean_violation", "max_constraint", "objective", "empty_region_units"},
                 {}};
    std::filesystem::create_directories(out() / "stage2");
    for (const RunSpec& run : m_.runs) {
      for (double a : treatments(run)) {
        for (double gamma : gammas(run, a)) {
          nlohmann::json sj = run.sensitivity;
          sj["gamma"] = gamma;
          const sensitivity::SensitivitySpec spec = sensitivity::spec_from_json(sj);
          for (int rep = 0; rep < m_.evaluation.repeats; ++rep) {
            TrainedRun tr{spec.label(), sj, gamma, run.gammas.oracle, a, rep, "", "", true, true};
            for (Direction dir : {Direction::upper, Direction::lower}) {
              queries::QuerySpec q = run.query;
              q.direction = dir;
              const std::string key = spec.label() + "_g" + short_number(gamma) + "_a" + short_number(a) + "_" +
                                      to_string(dir) + "_r" + std::to_string(rep);
              log("train stage2 " + key);
              const stage2::Stage2Model model = stage2::train_stage2(
                  *stage1_, propensity_fn_, spec, q, data_, m_.auglag, a, m_.seed_for("stage2/" + query_key(q) + key));
              const std::string rel = "stage2/" + key + ".json";
              nlohmann::json ckpt = stage2::to_json(model);
              ckpt["manifest_hash"] = m_.hash;
              flow::write_json_file((out() / rel).string(), ckpt);
              (dir == Direction::upper ? tr.upper_path : tr.lower_path) = rel;
              (dir == Direction::upper ? tr.feasible_upper : tr.feasible_lower) = model.feasible;
              for (const stage2::TraceRow& t : model.trace) {
                traces.add(m_.hash, m_.experiment, spec.label(), gamma, a, to_string(dir), rep, t.outer, t.mu,
                           t.mean_lambda, t.mean_violation, t.max_constraint, t.objective, t.empty_region_units);
              }
            }
            runs.push_back(tr);
          }
        }
      }
    }
    traces.write(out() / "traces.csv");
    nlohmann::json index = nlohmann::json::array();
    for (const TrainedRun& r : runs) index.push_back(to_json(r));
    flow::write_json_file((out() / "stage2_index.json").string(),
                          {{"format_version", kManifestFormatVersion}, {"manifest_hash", m_.hash}, {"runs", index}});
    return runs;
  }

  [[nodiscard]] std::vector<TrainedRun> load_runs() const {
    const nlohmann::json j = flow::read_json_file((out() / "stage2_index.json").string());
    require(j.value("manifest_hash", "") == m_.hash, ErrorCode::invalid_argument,
            "stage2 index was produced by a different manifest; rerun train-stage2");
    std::vector<TrainedRun> runs;
    for (const auto& r : j.at("runs")) runs.push_back(trained_run_from_json(r));
    return runs;
  }

  /// Bounds for every trained pair at its evaluation points.
  std::vector<BoundsRow> bounds(const std::vector<TrainedRun>& runs,
                                const std::optional<std::vector<stage2::EvaluationPoint>>& override_points = {}) {
    std::vector<BoundsRow> rows;
    const stage2::BoundsConfig cfg{m_.evaluation.k, m_.evaluation.constraint_k, m_.seed_for("eval")};
    for (const TrainedRun& tr : runs) {
      const stage2::Stage2Model upper = load_stage2(tr.upper_path);
      const stage2::Stage2Model lower = load_stage2(tr.lower_path);
      std::vector<stage2::EvaluationPoint> points;
      std::vector<std::size_t> units;
      std::vector<double> truths;
      if (override_points) {
        for (std::size_t i = 0; i < override_points->size(); ++i) {
          const auto& p = (*override_points)[i];
          if (!std::isnan(p.a) && std::fabs(p.a - tr.a) > 1e-12) continue;
          points.push_back({p.x, tr.a});
          units.push_back(i);
          truths.push_back(kNotApplicable);
        }
      } else {
        require(truth_.has_value(), ErrorCode::invalid_argument,
                "bounds: no ground truth available; pass evaluation points explicitly");
        // Stride over distinct units in order of appearance.
        std::map<std::size_t, std::size_t> rank;
        for (const datagen::TruthPoint& p : truth_->points) rank.emplace(p.unit, rank.size());
        for (const datagen::TruthPoint& p : truth_->points) {
          if (std::fabs(p.a - tr.a) > 1e-12) continue;
          if (rank.at(p.unit) % static_cast<std::size_t>(m_.evaluation.point_stride) != 0) continue;
          points.push_back({p.x, p.a});
          units.push_back(p.unit);
          truths.push_back(truth_applies(upper.query) ? p.truth : kNotApplicable);
        }
      }
      log("bounds " + tr.upper_path + " at " + std::to_string(points.size()) + " points");
      const auto results = stage2::compute_bounds(*stage1_, upper, lower, propensity_fn_, points, cfg);
      const bool with_cf = m_.evaluation.closed_form && closed_form_applies(upper);
      const double limit = tr.gamma * (1.0 + m_.auglag.eps_constraint);
      bool accepted_upper = tr.feasible_upper;
      bool accepted_lower = tr.feasible_lower;
      for (const stage2::BoundsResult& b : results) {
        accepted_upper = accepted_upper && b.d_upper <= limit;
        accepted_lower = accepted_lower && b.d_lower <= limit;
      }
      for (std::size_t i = 0; i < points.size(); ++i) {
        BoundsRow r{tr.model, tr.gamma, tr.gamma_oracle, tr.a, tr.repeat, units[i], points[i].x, results[i],
                    truths[i], kNotApplicable, kNotApplicable, tr.feasible_upper, tr.feasible_lower,
                    accepted_upper, accepted_lower};
        if (with_cf) {
          std::optional<double> pi = propensity_fn_(points[i].x, tr.a);
          if (pi) pi = observational::clamp_propensity(*pi);
          r.cf_lower = sensitivity::closed_form_msm_bound(*stage1_, points[i].x, tr.a, tr.gamma, Direction::lower, pi);
          r.cf_upper = sensitivity::closed_form_msm_bound(*stage1_, points[i].x, tr.a, tr.gamma, Direction::upper, pi);
        }
        rows.push_back(std::move(r));
      }
    }
    write_bounds(rows);
    return rows;
  }

  [[nodiscard]] std::vector<BoundsRow> load_bounds() const {
    const nlohmann::json j = flow::read_json_file((out() / "bounds.json").string());
    require(j.value("manifest_hash", "") == m_.hash, ErrorCode::invalid_argument,
            "bounds were produced by a different manifest; rerun bounds");
    std::vector<BoundsRow> rows;
    for (const auto& r : j.at("rows")) rows.push_back(bounds_row_from_json(r));
    return rows;
  }

  [[nodiscard]] stage2::Stage2Model load_stage2(const std::string& rel) const {
    return stage2::stage2_from_json(flow::read_json_file((out() / rel).string()));
  }

  [[nodiscard]] std::uint64_t named_seed(std::string_view name) const { return m_.seed_for(name); }

  static void log(const std::string& s) { std::cerr << "[ncsa] " << s << '\n'; }

 private:
  static std::string query_key(const queries::QuerySpec& q) { return queries::to_json(q).dump() + "/"; }

  [[nodiscard]] bool truth_applies(const queries::QuerySpec& q) const {
    return q.type == queries::QueryType::expectation && q.outcome == 0;
  }

  [[nodiscard]] bool closed_form_applies(const stage2::Stage2Model& m) const {
    return (m.spec.kind == sensitivity::ModelKind::msm || m.spec.kind == sensitivity::ModelKind::cmsm) &&
           m.query.type == queries::QueryType::expectation && stage1_->d_y() == 1;
  }

  void prepare_data() {
    const nlohmann::json& d = m_.data;
    if (d.contains("dgp")) {
      const std::string dgp = d.at("dgp").get<std::string>();
      nlohmann::json cfg = d.value("config", nlohmann::json::object());
      cfg["seed"] = m_.seed_for("data");
      datagen::Generated g;
      if (dgp == "binary") {
        g = datagen::generate_binary(datagen::binary_dgp_from_json(cfg));
      } else if (dgp == "continuous") {
        g = datagen::generate_continuous(datagen::continuous_dgp_from_json(cfg));
      } else if (dgp == "semisynthetic") {
        if (cfg.contains("covariates_csv")) cfg["covariates_csv"] = m_.resolve(cfg["covariates_csv"]).string();
        g = datagen::generate_semisynthetic(datagen::semisynthetic_dgp_from_json(cfg));
      } else {
        throw Error(ErrorCode::invalid_argument, "manifest: unknown dgp '" + dgp + "'");
      }
      data_ = std::move(g.data);
      truth_ = std::move(g.truth);
      data::write_csv(data_, (out() / "data.csv").string());
      flow::write_json_file((out() / "ground_truth.json").string(), datagen::to_json(*truth_));
      write_oracle_table(*truth_, out() / "oracle_gamma.csv", m_.hash);
    } else {
      data_ = data::read_csv(m_.resolve(d.at("csv").get<std::string>()).string());
      if (d.contains("ground_truth")) {
        truth_ = datagen::ground_truth_from_json(
            flow::read_json_file(m_.resolve(d.at("ground_truth").get<std::string>()).string()));
      }
    }
    data_.validate();
  }

  void prepare_stage1() {
    if (m_.stage1.contains("checkpoint")) {
      stage1_ = observational::stage1_from_json(
          flow::read_json_file(m_.resolve(m_.stage1.at("checkpoint").get<std::string>()).string()));
    } else {
      const auto path = out() / "stage1.json";
      if (std::filesystem::exists(path)) {
        const nlohmann::json j = flow::read_json_file(path.string());
        if (j.value("manifest_hash", "") == m_.hash) stage1_ = observational::stage1_from_json(j);
      }
      if (!stage1_) {
        flow::FlowConfig fc;
        if (m_.stage1.contains("flow")) {
          nlohmann::json f = m_.stage1.at("flow");
          f["d_x"] = data_.d_x();
          f["d_a"] = 1;
          f["d_y"] = data_.d_y();
          fc = flow::flow_config_from_json(f);
        }
        observational::TrainConfig tc =
            observational::train_config_from_json(m_.stage1.value("train", nlohmann::json::object()));
        tc.seed = m_.seed_for("stage1");
        log("train stage1");
        stage1_ = observational::fit_stage1(data_, fc, tc);
        nlohmann::json j = observational::to_json(*stage1_);
        j["manifest_hash"] = m_.hash;
        flow::write_json_file(path.string(), j);
      }
    }
    require(stage1_->d_x() == data_.d_x() && stage1_->d_y() == data_.d_y(), ErrorCode::dimension_mismatch,
            "Stage-1 checkpoint dimensions differ from the dataset");
  }

  void prepare_propensity() {
    const std::string mode = m_.propensity.value("mode", std::string("estimated"));
    if (!data_.binary_treatment()) {
      propensity_fn_ = stage2::continuous_propensity();
      return;
    }
    if (mode == "oracle") {
      require(truth_.has_value(), ErrorCode::invalid_argument, "propensity: oracle mode needs a generated dataset");
      if (truth_->dgp == "binary") {
        propensity_fn_ = [](std::span<const double> x, double a) {
          const double p = datagen::BinaryDgp::propensity(x[0]);
          return std::optional<double>(a == 1.0 ? p : 1.0 - p);
        };
      } else if (truth_->dgp == "semisynthetic") {
        const datagen::SemiSyntheticDgp d = datagen::semisynthetic_dgp_from_json(truth_->config);
        propensity_fn_ = [d](std::span<const double> x, double a) {
          const double p = d.propensity(x);
          return std::optional<double>(a == 1.0 ? p : 1.0 - p);
        };
      } else {
        throw Error(ErrorCode::invalid_argument, "propensity: no oracle for dgp '" + truth_->dgp + "'");
      }
      return;
    }
    require(mode == "estimated", ErrorCode::invalid_argument, "propensity: mode must be 'oracle' or 'estimated'");
    if (m_.propensity.contains("checkpoint")) {
      propensity_model_ = observational::PropensityModel::from_json(
          flow::read_json_file(m_.resolve(m_.propensity.at("checkpoint").get<std::string>()).string()));
    } else {
      const auto path = out() / "propensity.json";
      if (std::filesystem::exists(path)) {
        const nlohmann::json j = flow::read_json_file(path.string());
        if (j.value("manifest_hash", "") == m_.hash) propensity_model_ = observational::PropensityModel::from_json(j);
      }
      if (!propensity_model_) {
        observational::PropensityNetConfig net;
        net.hidden = m_.propensity.value("layer_sizes", net.hidden);
        observational::TrainConfig tc =
            observational::train_config_from_json(m_.propensity.value("train", nlohmann::json::object()));
        tc.seed = m_.seed_for("propensity");
        log("train propensity");
        propensity_model_ = observational::fit_propensity(data_, net, tc);
        nlohmann::json j = propensity_model_->to_json();
        j["manifest_hash"] = m_.hash;
        flow::write_json_file(path.string(), j);
      }
    }
    require(propensity_model_->d_x() == data_.d_x(), ErrorCode::dimension_mismatch,
            "propensity checkpoint dimensions differ from the dataset");
    propensity_fn_ = stage2::propensity_from_model(*propensity_model_);
  }

  [[nodiscard]] std::vector<double> treatments(const RunSpec& run) const {
    if (run.treatments) return *run.treatments;
    if (data_.binary_treatment()) return {0.0, 1.0};
    require(truth_.has_value(), ErrorCode::invalid_argument,
            "manifest: continuous treatments need explicit 'treatments' without a ground truth");
    std::vector<double> levels;
    for (const auto& s : truth_->summaries) {
      if (s.a) levels.push_back(*s.a);
    }
    return levels;
  }

  [[nodiscard]] std::vector<double> gammas(const RunSpec& run, double a) const {
    if (!run.gammas.oracle) return run.gammas.grid;
    require(truth_.has_value(), ErrorCode::invalid_argument, "manifest: oracle gammas need a ground truth");
    nlohmann::json sj = run.sensitivity;
    sj["gamma"] = sj.value("kind", "") == "f" ? 0.0 : 1.0;
    std::string label = sensitivity::spec_from_json(sj).label();
    const datagen::OracleSummary& s =
        truth_->summary(data_.binary_treatment() ? std::optional<double>() : std::optional<double>(a));
    if (!s.gamma.contains(label) && label == "msm") label = "cmsm";
    if (!s.gamma.contains(label) && label == "cmsm") label = "msm";
    require(s.gamma.contains(label), ErrorCode::invalid_argument, "manifest: no oracle gamma for model " + label);
    return {s.gamma.at(label)};
  }

  void write_bounds(const std::vector<BoundsRow>& rows) const {
    Table t{{"manifest_hash", "experiment", "model", "gamma", "gamma_source", "a", "repeat", "unit", "x1", "lower",
             "upper", "lower_se", "upper_se", "length", "truth", "cf_lower", "cf_upper", "d_lower", "d_upper",
             "feasible_lower", "feasible_upper", "accepted_lower", "accepted_upper"},
            {}};
    Table plot{{"manifest_hash", "x1", "a", "gamma", "model", "repeat", "lower", "upper", "truth", "cf_lower",
                "cf_upper"},
               {}};
    nlohmann::json js = nlohmann::json::array();
    for (const BoundsRow& r : rows) {
      const std::string source = r.gamma_oracle ? "oracle" : "grid";
      t.add(m_.hash, m_.experiment, r.model, r.gamma, source, r.a, r.repeat, r.unit, r.x.at(0), r.bounds.lower,
            r.bounds.upper, r.bounds.lower_se, r.bounds.upper_se, r.bounds.upper - r.bounds.lower, r.truth, r.cf_lower,
            r.cf_upper, r.bounds.d_lower, r.bounds.d_upper, r.feasible_lower, r.feasible_upper, r.accepted_lower,
            r.accepted_upper);
      plot.add(m_.hash, r.x.at(0), r.a, r.gamma, r.model, r.repeat, r.bounds.lower, r.bounds.upper, r.truth,
               r.cf_lower, r.cf_upper);
      js.push_back(to_json(r));
    }
    t.write(out() / "bounds.csv");
    plot.write(out() / "plot_bounds.csv");
    flow::write_json_file((out() / "bounds.json").string(),
                          {{"format_version", kManifestFormatVersion}, {"manifest_hash", m_.hash}, {"rows", js}});
  }

 public:
  static void write_oracle_table(const datagen::GroundTruth& g, const std::filesystem::path& path,
                                 const std::string& hash) {
    Table t{{"manifest_hash", "dgp", "scope", "unit", "x1", "a", "model", "gamma_star"}, {}};
    for (const datagen::TruthPoint& p : g.points) {
      for (const auto& [label, v] : p.oracle_gamma) t.add(hash, g.dgp, "point", p.unit, p.x.at(0), p.a, label, v);
    }
    for (const datagen::OracleSummary& s : g.summaries) {
      for (const auto& [label, v] : s.gamma) {
        t.add(hash, g.dgp, s.aggregation, std::string(), std::string(), s.a ? cell(*s.a) : std::string(), label, v);
      }
    }
    t.write(path);
  }

 private:
  Manifest m_;
  data::Dataset data_;
  std::optional<datagen::GroundTruth> truth_;
  std::optional<observational::Stage1Model> stage1_;
  std::optional<observational::PropensityModel> propensity_model_;
  stage2::PropensityFn propensity_fn_;
};

}  // namespace ncsa::harness
