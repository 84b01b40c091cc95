#pragma once

#include <stdexcept>
#include <string>
#include <type_traits>
#include <string_view>

namespace ncsa {

enum class ErrorCode {
  invalid_argument,
  non_finite,
  positivity,
  dimension_mismatch,
  io,
  infeasible,
  degenerate_density,
  quadrature,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::positivity: return "positivity";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::io: return "io";
    case ErrorCode::infeasible: return "infeasible";
    case ErrorCode::degenerate_density: return "degenerate_density";
    case ErrorCode::quadrature: return "quadrature";
  }
  return "unknown";
}

/// Every library failure carries a code so the CLI can report it as JSON.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  [[nodiscard]] ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

/// Builds the message only on failure; for checks inside hot loops.
template <class Message>
  requires std::is_invocable_r_v<std::string, Message>
inline void require(bool ok, ErrorCode code, Message&& what) {
  if (!ok) throw Error(code, what());
}

}  // namespace ncsa
