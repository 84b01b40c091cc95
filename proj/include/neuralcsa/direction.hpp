#pragma once

#include <string>

#include "neuralcsa/error.hpp"

namespace ncsa {

enum class Direction { upper, lower };

inline std::string to_string(Direction d) { return d == Direction::upper ? "upper" : "lower"; }

inline Direction direction_from_string(const std::string& s) {
  if (s == "upper") return Direction::upper;
  require(s == "lower", ErrorCode::invalid_argument, "direction must be 'upper' or 'lower', got '" + s + "'");
  return Direction::lower;
}

}  // namespace ncsa
