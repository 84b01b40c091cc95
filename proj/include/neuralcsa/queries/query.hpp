#pragma once

// Causal query functionals on the shifted interventional distribution:
// expectation of one outcome, probability of an axis-aligned region, and a
// quantile of one outcome.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuralcsa/direction.hpp"
#include "neuralcsa/error.hpp"
#include "neuralcsa/matrix.hpp"

namespace ncsa::queries {

enum class QueryType { expectation, set_probability, quantile };

inline std::string to_string(QueryType t) {
  switch (t) {
    case QueryType::expectation: return "expectation";
    case QueryType::set_probability: return "set_prob";
    case QueryType::quantile: return "quantile";
  }
  return "?";
}

/// One side of a region: [lo, hi] when closed, (lo, hi) when open. Infinite ends allowed.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool closed = true;

  [[nodiscard]] bool contains(double v) const { return closed ? (v >= lo && v <= hi) : (v > lo && v < hi); }
  [[nodiscard]] bool empty() const { return closed ? lo > hi : lo >= hi; }
  bool operator==(const Interval&) const = default;
};

struct QuerySpec {
  QueryType type = QueryType::expectation;
  Direction direction = Direction::upper;
  int outcome = 0;              // expectation and quantile
  std::vector<Interval> region;  // set probability, one interval per outcome dimension
  double level = 0.5;           // quantile

  void validate(int d_y) const {
    switch (type) {
      case QueryType::expectation:
      case QueryType::quantile:
        require(outcome >= 0 && outcome < d_y, ErrorCode::dimension_mismatch,
                "query: outcome index " + std::to_string(outcome) + " outside 0.." + std::to_string(d_y - 1));
        if (type == QueryType::quantile) {
          require(level > 0.0 && level < 1.0, ErrorCode::invalid_argument, "query: quantile level must lie in (0, 1)");
        }
        break;
      case QueryType::set_probability:
        require(static_cast<int>(region.size()) == d_y, ErrorCode::dimension_mismatch,
                "query: region has " + std::to_string(region.size()) + " intervals for " + std::to_string(d_y) +
                    " outcome dimensions");
        for (const Interval& iv : region) require(!iv.empty(), ErrorCode::invalid_argument, "query: empty region");
        break;
    }
  }

  [[nodiscard]] bool in_region(std::span<const double> y) const {
    for (std::size_t j = 0; j < region.size(); ++j) {
      if (!region[j].contains(y[j])) return false;
    }
    return true;
  }

  /// Same functional, ignoring direction.
  [[nodiscard]] bool same_functional(const QuerySpec& o) const {
    return type == o.type && outcome == o.outcome && region == o.region && level == o.level;
  }
};

inline double json_bound(const nlohmann::json& v, double fallback) { return v.is_null() ? fallback : v.get<double>(); }

inline QuerySpec query_from_json(const nlohmann::json& j) {
  QuerySpec q;
  const std::string type = j.at("type").get<std::string>();
  if (type == "expectation") {
    q.type = QueryType::expectation;
  } else if (type == "set_prob") {
    q.type = QueryType::set_probability;
    const bool closed = j.value("closed", true);
    for (const auto& iv : j.at("region")) {
      require(iv.is_array() && iv.size() == 2, ErrorCode::invalid_argument, "query: region entries are [lo, hi]");
      q.region.push_back({json_bound(iv[0], -std::numeric_limits<double>::infinity()),
                          json_bound(iv[1], std::numeric_limits<double>::infinity()), closed});
    }
  } else if (type == "quantile") {
    q.type = QueryType::quantile;
    q.level = j.at("level").get<double>();
  } else {
    throw Error(ErrorCode::invalid_argument, "query: unknown type '" + type + "'");
  }
  q.outcome = j.value("outcome", 0);
  q.direction = direction_from_string(j.value("direction", std::string("upper")));
  return q;
}

inline nlohmann::json to_json(const QuerySpec& q) {
  nlohmann::json j = {{"type", to_string(q.type)}, {"direction", to_string(q.direction)}, {"outcome", q.outcome}};
  if (q.type == QueryType::quantile) j["level"] = q.level;
  if (q.type == QueryType::set_probability) {
    nlohmann::json region = nlohmann::json::array();
    for (const Interval& iv : q.region) {
      region.push_back({std::isfinite(iv.lo) ? nlohmann::json(iv.lo) : nlohmann::json(),
                        std::isfinite(iv.hi) ? nlohmann::json(iv.hi) : nlohmann::json()});
    }
    j["region"] = region;
    j["closed"] = q.region.empty() || q.region.front().closed;
  }
  return j;
}

/// Lower-order-statistic empirical quantile: the ceil(q k)-th smallest value.
inline double empirical_quantile(std::vector<double> values, double q) {
  require(!values.empty(), ErrorCode::invalid_argument, "quantile of an empty sample");
  const auto k = values.size();
  auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(k)));
  idx = std::clamp<std::size_t>(idx, 1, k) - 1;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(idx), values.end());
  return values[idx];
}

struct QueryValue {
  double value = 0.0;
  double std_error = 0.0;
};

/// Functional applied to outcome samples (rows of `y`, original units).
inline QueryValue apply_functional(const QuerySpec& query, const Matrix& y) {
  const auto k = static_cast<double>(y.rows);
  switch (query.type) {
    case QueryType::expectation: {
      const std::vector<double> col = y.column(static_cast<std::size_t>(query.outcome));
      double mean = 0.0;
      for (double v : col) mean += v;
      mean /= k;
      double sq = 0.0;
      for (double v : col) sq += (v - mean) * (v - mean);
      return {mean, std::sqrt(sq / (k - 1.0) / k)};
    }
    case QueryType::set_probability: {
      double hits = 0.0;
      for (std::size_t i = 0; i < y.rows; ++i) hits += query.in_region(y.row(i)) ? 1.0 : 0.0;
      const double p = hits / k;
      return {p, std::sqrt(std::max(p * (1.0 - p), 1.0 / k) / k)};
    }
    case QueryType::quantile: {
      std::vector<double> col = y.column(static_cast<std::size_t>(query.outcome));
      const double q = query.level;
      const double delta = std::sqrt(q * (1.0 - q) / k);
      const double mid = empirical_quantile(col, q);
      // Order-statistic band of +-1 binomial standard deviation.
      const double lo = empirical_quantile(col, std::max(q - delta, 1.0 / k));
      const double hi = empirical_quantile(col, std::min(q + delta, 1.0));
      return {mid, 0.5 * (hi - lo)};
    }
  }
  return {};
}

struct Bounds {
  double lower = 0.0;
  double upper = 0.0;
};

struct WeightedBounds {
  double weight = 0.0;
  Bounds bounds;
};

/// Weighted means of per-x bounds; weights must be nonnegative and sum to 1.
inline Bounds average_bounds(std::span<const WeightedBounds> items) {
  require(!items.empty(), ErrorCode::invalid_argument, "average_bounds: empty list");
  double total = 0.0;
  Bounds out;
  for (const WeightedBounds& w : items) {
    require(w.weight >= 0.0 && std::isfinite(w.weight), ErrorCode::invalid_argument,
            "average_bounds: weights must be nonnegative");
    total += w.weight;
    out.lower += w.weight * w.bounds.lower;
    out.upper += w.weight * w.bounds.upper;
  }
  require(std::fabs(total - 1.0) <= 1e-9, ErrorCode::invalid_argument,
          "average_bounds: weights sum to " + std::to_string(total) + ", expected 1");
  return out;
}

/// Bounds on Q(a1) - Q(a2) from per-arm bounds.
inline Bounds difference_bounds(const Bounds& a1, const Bounds& a2) {
  return {a1.lower - a2.upper, a1.upper - a2.lower};
}

}  // namespace ncsa::queries
