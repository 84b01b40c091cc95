#pragma once

// Versioned JSON form of a ConditionalFlow. Parameters are written as a
// decimal list; nlohmann/json prints doubles with round-trip precision, so a
// save/load cycle reproduces every parameter bit-for-bit.

#include <fstream>
#include <string>

#include <json.hpp>

#include "neuralcsa/error.hpp"
#include "neuralcsa/flow/conditional_flow.hpp"

namespace ncsa::flow {

inline constexpr int kCheckpointFormatVersion = 1;

inline nlohmann::json to_json(const FlowConfig& c) {
  return {{"d_x", c.d_x},
          {"d_a", c.d_a},
          {"d_y", c.d_y},
          {"num_bins", c.num_bins},
          {"tail_bound", c.tail_bound},
          {"layer_sizes", c.hidden},
          {"conditioning_order", c.order()}};
}

inline FlowConfig flow_config_from_json(const nlohmann::json& j) {
  FlowConfig c;
  c.d_x = j.at("d_x").get<int>();
  c.d_a = j.at("d_a").get<int>();
  c.d_y = j.at("d_y").get<int>();
  c.num_bins = j.value("num_bins", c.num_bins);
  c.tail_bound = j.value("tail_bound", c.tail_bound);
  c.hidden = j.value("layer_sizes", c.hidden);
  c.conditioning_order = j.value("conditioning_order", std::vector<int>{});
  c.validate();
  return c;
}

inline nlohmann::json to_json(const ConditionalFlow& flow) {
  nlohmann::json j = to_json(flow.config());
  j["format_version"] = kCheckpointFormatVersion;
  const auto p = flow.parameters();
  j["parameters"] = std::vector<double>(p.begin(), p.end());
  return j;
}

inline ConditionalFlow flow_from_json(const nlohmann::json& j) {
  require(j.value("format_version", 0) == kCheckpointFormatVersion, ErrorCode::invalid_argument,
          "checkpoint: unsupported format_version");
  return {flow_config_from_json(j), j.at("parameters").get<std::vector<double>>()};
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::io, "malformed JSON in " + path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path);
  out << j.dump(1) << '\n';
}

}  // namespace ncsa::flow
