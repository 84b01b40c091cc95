#pragma once

// Ground truth emitted next to a generated dataset.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuralcsa/data/dataset.hpp"
#include "neuralcsa/error.hpp"

namespace ncsa::datagen {

inline constexpr int kGroundTruthFormatVersion = 1;

/// One evaluation point. Points sharing `unit` share x and differ in a.
struct TruthPoint {
  std::size_t unit = 0;
  std::vector<double> x;
  double a = 0.0;
  double truth = 0.0;            // E[Y(a) | x], first outcome
  bool observed = true;          // a is the treatment actually drawn for this unit
  std::map<std::string, double> oracle_gamma;  // by model label
};

/// Aggregated Gamma* per model; `a` is set for continuous treatments.
struct OracleSummary {
  std::optional<double> a;
  std::string aggregation;  // "max", "x_average" or "median"
  std::map<std::string, double> gamma;
};

struct GroundTruth {
  std::string dgp;
  nlohmann::json config;
  std::vector<TruthPoint> points;
  std::vector<OracleSummary> summaries;

  [[nodiscard]] const OracleSummary& summary(std::optional<double> a = std::nullopt) const {
    for (const OracleSummary& s : summaries) {
      if (s.a == a || (s.a && a && std::fabs(*s.a - *a) < 1e-12)) return s;
    }
    throw Error(ErrorCode::invalid_argument, "ground truth: no oracle summary for the requested treatment");
  }
};

struct Generated {
  data::Dataset data;
  GroundTruth truth;
};

inline nlohmann::json to_json(const GroundTruth& g) {
  nlohmann::json points = nlohmann::json::array();
  for (const TruthPoint& p : g.points) {
    points.push_back({{"unit", p.unit},
                      {"x", p.x},
                      {"a", p.a},
                      {"truth", p.truth},
                      {"observed", p.observed},
                      {"oracle_gamma", p.oracle_gamma}});
  }
  nlohmann::json summaries = nlohmann::json::array();
  for (const OracleSummary& s : g.summaries) {
    summaries.push_back({{"a", s.a ? nlohmann::json(*s.a) : nlohmann::json()},
                         {"aggregation", s.aggregation},
                         {"gamma", s.gamma}});
  }
  return {{"format_version", kGroundTruthFormatVersion},
          {"kind", "ground_truth"},
          {"dgp", g.dgp},
          {"config", g.config},
          {"points", points},
          {"oracle_summaries", summaries}};
}

inline GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  require(j.value("format_version", 0) == kGroundTruthFormatVersion && j.value("kind", "") == "ground_truth",
          ErrorCode::invalid_argument, "ground truth: wrong kind or format_version");
  GroundTruth g;
  g.dgp = j.at("dgp").get<std::string>();
  g.config = j.at("config");
  for (const auto& p : j.at("points")) {
    g.points.push_back({p.at("unit").get<std::size_t>(), p.at("x").get<std::vector<double>>(),
                        p.at("a").get<double>(), p.at("truth").get<double>(), p.at("observed").get<bool>(),
                        p.at("oracle_gamma").get<std::map<std::string, double>>()});
  }
  for (const auto& s : j.at("oracle_summaries")) {
    g.summaries.push_back({s.at("a").is_null() ? std::optional<double>() : s.at("a").get<double>(),
                           s.at("aggregation").get<std::string>(),
                           s.at("gamma").get<std::map<std::string, double>>()});
  }
  return g;
}

}  // namespace ncsa::datagen
