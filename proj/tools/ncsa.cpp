// Command-line front end. Failures print {"error": code, "message": ...} on
// stderr and exit with a code per error kind.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "neuralcsa/data/dataset.hpp"
#include "neuralcsa/datagen/binary.hpp"
#include "neuralcsa/datagen/continuous.hpp"
#include "neuralcsa/datagen/semisynthetic.hpp"
#include "neuralcsa/error.hpp"
#include "neuralcsa/flow/checkpoint.hpp"
#include "neuralcsa/harness/manifest.hpp"
#include "neuralcsa/harness/pipeline.hpp"
#include "neuralcsa/harness/report.hpp"
#include "neuralcsa/harness/table.hpp"
#include "neuralcsa/observational/propensity.hpp"
#include "neuralcsa/observational/stage1.hpp"
#include "neuralcsa/sensitivity/closed_form.hpp"

namespace {

using namespace ncsa;
using nlohmann::json;

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::invalid_argument: return 2;
    case ErrorCode::io: return 3;
    case ErrorCode::dimension_mismatch: return 4;
    case ErrorCode::non_finite: return 5;
    case ErrorCode::positivity: return 6;
    case ErrorCode::infeasible: return 7;
    case ErrorCode::degenerate_density: return 8;
    case ErrorCode::quadrature: return 9;
  }
  return 1;
}

json read_config(const std::string& path) { return path.empty() ? json::object() : flow::read_json_file(path); }

datagen::Generated generate(const std::string& dgp, json cfg, const std::filesystem::path& config_dir) {
  if (dgp == "binary") return datagen::generate_binary(datagen::binary_dgp_from_json(cfg));
  if (dgp == "continuous") return datagen::generate_continuous(datagen::continuous_dgp_from_json(cfg));
  if (dgp == "semisynthetic") {
    if (cfg.contains("covariates_csv")) {
      const std::filesystem::path p(cfg["covariates_csv"].get<std::string>());
      if (p.is_relative()) cfg["covariates_csv"] = (config_dir / p).string();
    }
    return datagen::generate_semisynthetic(datagen::semisynthetic_dgp_from_json(cfg));
  }
  throw Error(ErrorCode::invalid_argument, "unknown dgp '" + dgp + "'");
}

void print_report(const std::vector<harness::ReportRow>& rows) {
  for (const auto& r : rows) {
    std::cout << r.target << " " << r.model << " gamma=" << harness::cell(r.gamma)
              << (std::isnan(r.a) ? "" : " a=" + harness::cell(r.a)) << " coverage=" << harness::cell(r.coverage)
              << " median_length=" << harness::cell(r.median_length_points)
              << " cf_gap=" << harness::cell(r.cf_gap) << '\n';
  }
}

/// Stage-2 infeasibility is an error unless explicitly allowed.
void check_feasible(const std::vector<harness::TrainedRun>& runs, bool allow) {
  std::size_t bad = 0;
  for (const auto& r : runs) bad += (r.feasible_upper ? 0 : 1) + (r.feasible_lower ? 0 : 1);
  if (bad > 0) {
    const std::string msg = std::to_string(bad) + " Stage-2 model(s) exceed gamma (1 + eps) on the check sample";
    if (!allow) throw Error(ErrorCode::infeasible, msg + "; see traces.csv or pass --allow-infeasible");
    harness::Pipeline::log("warning: " + msg);
  }
}

std::optional<std::vector<stage2::EvaluationPoint>> manifest_points(const harness::Pipeline& p,
                                                                     const std::string& arg) {
  if (arg == "grid" && p.truth()) return std::nullopt;
  return harness::points_from_argument(arg, p.dataset().d_x());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural causal sensitivity analysis"};
  app.require_subcommand(1);

  std::string dgp;
  std::string config;
  std::string out;
  std::string data_path;
  std::string manifest;
  std::string points = "grid";
  std::string stage1_path;
  std::string propensity_path;
  std::vector<double> gammas;
  std::vector<double> arms;
  std::vector<std::string> specs;
  std::optional<double> fixed_pi;
  std::optional<std::uint64_t> seed;
  bool allow_infeasible = false;

  auto* gen = app.add_subcommand("generate-data", "Sample a dataset and its ground truth");
  gen->add_option("--dgp", dgp, "binary | continuous | semisynthetic")->required();
  gen->add_option("--config", config, "generator config JSON");
  gen->add_option("--seed", seed, "overrides the config seed");
  gen->add_option("--out", out, "output directory")->required();

  auto* s1 = app.add_subcommand("train-stage1", "Fit the observational outcome flow");
  s1->add_option("--data", data_path, "dataset CSV")->required();
  s1->add_option("--config", config, "JSON with optional 'flow' and 'train' objects");
  s1->add_option("--out", out, "checkpoint path")->required();

  auto* prop = app.add_subcommand("train-propensity", "Fit the propensity model");
  prop->add_option("--data", data_path, "dataset CSV")->required();
  prop->add_option("--config", config, "JSON with optional 'layer_sizes', 'num_bins' and 'train'");
  prop->add_option("--out", out, "checkpoint path")->required();

  auto* s2 = app.add_subcommand("train-stage2", "Train every Stage-2 model in a manifest");
  s2->add_option("--manifest", manifest)->required();
  s2->add_flag("--allow-infeasible", allow_infeasible, "exit 0 even if a model fails the constraint check");

  auto* bnd = app.add_subcommand("bounds", "Bounds for every trained Stage-2 pair");
  bnd->add_option("--manifest", manifest)->required();
  bnd->add_option("--points", points, "grid (ground-truth points, or grid[:N] on [-1, 1]) or a CSV of x_1..x_d[,a]");

  auto* cf = app.add_subcommand("closed-form", "Closed-form MSM bounds for a Stage-1 checkpoint");
  cf->add_option("--stage1", stage1_path)->required();
  cf->add_option("--gamma", gammas)->required();
  cf->add_option("--points", points, "grid[:N] or a CSV of covariates");
  cf->add_option("--a", arms, "treatments (default 0 1 for binary)");
  cf->add_option("--propensity", propensity_path, "propensity checkpoint for binary treatments");
  cf->add_option("--pi", fixed_pi, "fixed P(a | x) instead of a propensity checkpoint");
  cf->add_option("--out", out, "CSV path")->required();

  auto* og = app.add_subcommand("oracle-gamma", "Oracle sensitivity parameters of a generator");
  og->add_option("--dgp", dgp)->required();
  og->add_option("--config", config);
  og->add_option("--spec", specs, "model labels (default all)");
  og->add_option("--out", out, "CSV path")->required();

  auto* ev = app.add_subcommand("evaluate", "Coverage and interval-length report from computed bounds");
  ev->add_option("--manifest", manifest)->required();

  auto* run = app.add_subcommand("run", "Full manifest pipeline: train, bounds, evaluate");
  run->add_option("--manifest", manifest)->required();
  run->add_flag("--allow-infeasible", allow_infeasible);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) {
      json cfg = read_config(config);
      if (seed) cfg["seed"] = *seed;
      const datagen::Generated g = generate(dgp, cfg, std::filesystem::path(config).parent_path());
      std::filesystem::create_directories(out);
      data::write_csv(g.data, (std::filesystem::path(out) / "data.csv").string());
      flow::write_json_file((std::filesystem::path(out) / "ground_truth.json").string(), datagen::to_json(g.truth));
      harness::Pipeline::write_oracle_table(g.truth, std::filesystem::path(out) / "oracle_gamma.csv", "");
    } else if (s1->parsed()) {
      const data::Dataset ds = data::read_csv(data_path);
      const json cfg = read_config(config);
      flow::FlowConfig fc;
      if (cfg.contains("flow")) {
        json f = cfg.at("flow");
        f["d_x"] = ds.d_x();
        f["d_a"] = 1;
        f["d_y"] = ds.d_y();
        fc = flow::flow_config_from_json(f);
      }
      const auto model =
          observational::fit_stage1(ds, fc, observational::train_config_from_json(cfg.value("train", json::object())));
      flow::write_json_file(out, observational::to_json(model));
      std::cout << "final_loss=" << model.final_loss << " validation_loss=" << model.validation_loss << '\n';
    } else if (prop->parsed()) {
      const data::Dataset ds = data::read_csv(data_path);
      const json cfg = read_config(config);
      observational::PropensityNetConfig net;
      net.hidden = cfg.value("layer_sizes", net.hidden);
      net.num_bins = cfg.value("num_bins", net.num_bins);
      const auto model = observational::fit_propensity(
          ds, net, observational::train_config_from_json(cfg.value("train", json::object())));
      flow::write_json_file(out, model.to_json());
    } else if (s2->parsed()) {
      harness::Pipeline p(harness::read_manifest(manifest));
      p.prepare();
      check_feasible(p.train_all(), allow_infeasible);
    } else if (bnd->parsed()) {
      harness::Pipeline p(harness::read_manifest(manifest));
      p.prepare();
      p.bounds(p.load_runs(), manifest_points(p, points));
    } else if (cf->parsed()) {
      const auto stage1 = observational::stage1_from_json(flow::read_json_file(stage1_path));
      const auto pts = harness::points_from_argument(points, stage1.d_x());
      std::optional<observational::PropensityModel> pm;
      if (!propensity_path.empty()) pm = observational::PropensityModel::from_json(flow::read_json_file(propensity_path));
      if (arms.empty()) {
        require(stage1.binary_treatment, ErrorCode::invalid_argument, "closed-form: --a is required for continuous treatments");
        arms = {0.0, 1.0};
      }
      require(!stage1.binary_treatment || pm || fixed_pi, ErrorCode::invalid_argument,
              "closed-form: binary treatments need --propensity or --pi");
      harness::Table t{{"x1", "a", "gamma", "lower", "upper"}, {}};
      for (double gamma : gammas) {
        for (double a : arms) {
          for (const auto& pt : pts) {
            if (!std::isnan(pt.a) && pt.a != a) continue;
            std::optional<double> pi;
            if (stage1.binary_treatment) {
              pi = fixed_pi ? *fixed_pi : pm->probability(pt.x, a);
              pi = observational::clamp_propensity(*pi);
            }
            t.add(pt.x.at(0), a, gamma,
                  sensitivity::closed_form_msm_bound(stage1, pt.x, a, gamma, Direction::lower, pi),
                  sensitivity::closed_form_msm_bound(stage1, pt.x, a, gamma, Direction::upper, pi));
          }
        }
      }
      t.write(out);
    } else if (og->parsed()) {
      const datagen::Generated g = generate(dgp, read_config(config), std::filesystem::path(config).parent_path());
      datagen::GroundTruth truth = g.truth;
      if (!specs.empty()) {
        auto keep = [&](std::map<std::string, double>& m) {
          std::erase_if(m, [&](const auto& kv) { return std::find(specs.begin(), specs.end(), kv.first) == specs.end(); });
        };
        for (auto& p : truth.points) keep(p.oracle_gamma);
        for (auto& s : truth.summaries) keep(s.gamma);
      }
      harness::Pipeline::write_oracle_table(truth, out, "");
    } else if (ev->parsed()) {
      harness::Pipeline p(harness::read_manifest(manifest));
      p.prepare();
      print_report(harness::write_report(p, p.load_bounds()));
    } else if (run->parsed()) {
      harness::Pipeline p(harness::read_manifest(manifest));
      p.prepare();
      const auto runs = p.train_all();
      const auto rows = harness::write_report(p, p.bounds(runs));
      print_report(rows);
      check_feasible(runs, allow_infeasible);
    }
  } catch (const Error& e) {
    std::cerr << json{{"error", std::string(to_string(e.code()))}, {"message", e.what()}}.dump() << '\n';
    return exit_code(e.code());
  } catch (const json::exception& e) {
    std::cerr << json{{"error", "invalid_argument"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 0;
}
