#pragma once

// Minimal CSV table for result files. Numbers use the shortest round-trip
// form, so identical values always print identically.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "neuralcsa/data/dataset.hpp"
#include "neuralcsa/error.hpp"

namespace ncsa::harness {

/// Empty cell for NaN (not applicable), shortest round-trip text otherwise.
inline std::string cell(double v) { return std::isnan(v) ? std::string() : data::format_double(v); }
inline std::string cell(bool v) { return v ? "1" : "0"; }
inline std::string cell(int v) { return std::to_string(v); }
inline std::string cell(std::size_t v) { return std::to_string(v); }
inline std::string cell(const std::string& v) { return v; }
inline std::string cell(const char* v) { return v; }

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  template <class... Cells>
  void add(const Cells&... cells) {
    rows.push_back({cell(cells)...});
    require(rows.back().size() == header.size(), ErrorCode::invalid_argument, "table: row width differs from header");
  }

  void write(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::io, "cannot write " + path.string());
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i == 0 ? "" : ",") << r[i];
      out << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
  }
};

}  // namespace ncsa::harness
