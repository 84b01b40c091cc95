#pragma once

// Experiment manifest: data source, Stage-1 and propensity settings, the
// Stage-2 runs to train and how to evaluate them.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "neuralcsa/error.hpp"
#include "neuralcsa/flow/checkpoint.hpp"
#include "neuralcsa/harness/seeds.hpp"
#include "neuralcsa/observational/stage1.hpp"
#include "neuralcsa/queries/query.hpp"
#include "neuralcsa/stage2/trainer.hpp"

namespace ncsa::harness {

inline constexpr int kManifestFormatVersion = 1;
inline constexpr const char* kOutputRootVariable = "NCSA_OUTPUT_ROOT";

/// Gamma values for a run: an explicit grid or the oracle value from the ground truth.
struct GammaChoice {
  bool oracle = false;
  std::vector<double> grid;
};

struct RunSpec {
  nlohmann::json sensitivity;  // SensitivitySpec without gamma
  GammaChoice gammas;
  queries::QuerySpec query;    // direction is overridden per training
  std::optional<std::vector<double>> treatments;  // default: both arms or the ground-truth levels
};

struct EvaluationSettings {
  std::size_t k = 2000;
  std::size_t constraint_k = 256;
  bool closed_form = true;
  int repeats = 1;
  int point_stride = 1;  // keep every n-th ground-truth unit
};

struct Manifest {
  std::string experiment;
  std::uint64_t seed = 0;
  std::filesystem::path base_dir;  // relative paths inside the manifest resolve here
  std::filesystem::path output;
  nlohmann::json data;             // {"dgp": ..., "config": ...} or {"csv": ..., "ground_truth": ...}
  nlohmann::json stage1;           // {"flow": ..., "train": ...} or {"checkpoint": ...}
  nlohmann::json propensity;       // {"mode": "oracle" | "estimated", ...} or {"checkpoint": ...}
  stage2::AugLagConfig auglag;
  EvaluationSettings evaluation;
  std::vector<RunSpec> runs;
  std::string hash;                // FNV-1a of the canonical manifest text

  [[nodiscard]] std::uint64_t seed_for(std::string_view name) const { return sub_seed(seed, name); }

  [[nodiscard]] std::filesystem::path resolve(const std::string& p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
};

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xfU];
    v >>= 4U;
  }
  return s;
}

inline GammaChoice gamma_choice_from_json(const nlohmann::json& j) {
  GammaChoice g;
  if (j.is_string()) {
    require(j.get<std::string>() == "oracle", ErrorCode::invalid_argument,
            "manifest: gammas must be a list of numbers or \"oracle\"");
    g.oracle = true;
  } else {
    g.grid = j.get<std::vector<double>>();
    require(!g.grid.empty(), ErrorCode::invalid_argument, "manifest: empty gamma grid");
  }
  return g;
}

inline Manifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  require(j.value("format_version", 0) == kManifestFormatVersion, ErrorCode::invalid_argument,
          "manifest: unsupported format_version");
  Manifest m;
  m.experiment = j.at("experiment").get<std::string>();
  require(!m.experiment.empty() && m.experiment.find('/') == std::string::npos, ErrorCode::invalid_argument,
          "manifest: experiment id must be a plain name");
  m.seed = j.value("seed", std::uint64_t{0});
  m.base_dir = base_dir;
  if (const char* root = std::getenv(kOutputRootVariable); root != nullptr && *root != '\0') {
    m.output = std::filesystem::path(root) / m.experiment;
  } else {
    m.output = std::filesystem::path(j.value("output", "runs/" + m.experiment));
  }
  m.data = j.at("data");
  m.stage1 = j.value("stage1", nlohmann::json::object());
  m.propensity = j.value("propensity", nlohmann::json{{"mode", "estimated"}});
  m.auglag = stage2::auglag_from_json(j.value("auglag", nlohmann::json::object()));
  const nlohmann::json ev = j.value("evaluation", nlohmann::json::object());
  m.evaluation.k = ev.value("k", m.evaluation.k);
  m.evaluation.constraint_k = ev.value("constraint_k", static_cast<std::size_t>(m.auglag.k));
  m.evaluation.closed_form = ev.value("closed_form", m.evaluation.closed_form);
  m.evaluation.repeats = ev.value("repeats", m.evaluation.repeats);
  m.evaluation.point_stride = ev.value("point_stride", m.evaluation.point_stride);
  require(m.evaluation.k >= queries::kMinEvaluationSamples && m.evaluation.constraint_k >= 2 &&
              m.evaluation.repeats >= 1 && m.evaluation.point_stride >= 1,
          ErrorCode::invalid_argument, "manifest: invalid evaluation settings");
  for (const auto& r : j.at("runs")) {
    RunSpec run;
    run.sensitivity = r.at("sensitivity");
    run.gammas = gamma_choice_from_json(r.at("gammas"));
    run.query = queries::query_from_json(r.value("query", nlohmann::json{{"type", "expectation"}}));
    if (r.contains("treatments")) run.treatments = r.at("treatments").get<std::vector<double>>();
    m.runs.push_back(std::move(run));
  }
  require(!m.runs.empty(), ErrorCode::invalid_argument, "manifest: no runs");
  m.hash = hex64(fnv1a(j.dump()));
  return m;
}

inline Manifest read_manifest(const std::string& path) {
  const nlohmann::json j = flow::read_json_file(path);
  try {
    return manifest_from_json(j, std::filesystem::path(path).parent_path());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_argument, "manifest " + path + ": " + e.what());
  }
}

}  // namespace ncsa::harness
