#pragma once

// Observational dataset (x, a, y) and its CSV form:
//   header `x_1,...,x_{d_x},a,y_1,...,y_{d_y}`, one unit per row.
// Numbers are written in shortest round-trip form so files are reproducible.

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "neuralcsa/error.hpp"
#include "neuralcsa/matrix.hpp"

namespace ncsa::data {

struct Dataset {
  Matrix x;               // n x d_x
  std::vector<double> a;  // n
  Matrix y;               // n x d_y

  [[nodiscard]] std::size_t size() const { return a.size(); }
  [[nodiscard]] int d_x() const { return static_cast<int>(x.cols); }
  [[nodiscard]] int d_y() const { return static_cast<int>(y.cols); }

  /// True when every treatment is exactly 0 or 1.
  [[nodiscard]] bool binary_treatment() const {
    for (double v : a) {
      if (v != 0.0 && v != 1.0) return false;
    }
    return true;
  }

  void validate() const {
    require(size() > 0, ErrorCode::invalid_argument, "dataset: no rows");
    require(x.rows == size() && y.rows == size(), ErrorCode::dimension_mismatch, "dataset: row counts differ");
    require(y.cols >= 1, ErrorCode::dimension_mismatch, "dataset: at least one outcome column required");
    for (double v : x.data) require(std::isfinite(v), ErrorCode::non_finite, "dataset: non-finite covariate");
    for (double v : a) require(std::isfinite(v), ErrorCode::non_finite, "dataset: non-finite treatment");
    for (double v : y.data) require(std::isfinite(v), ErrorCode::non_finite, "dataset: non-finite outcome");
  }

  /// Rows [begin, end) as a new dataset.
  [[nodiscard]] Dataset slice(std::size_t begin, std::size_t end) const {
    Dataset out;
    out.x = Matrix(end - begin, x.cols);
    out.y = Matrix(end - begin, y.cols);
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < x.cols; ++j) out.x(i - begin, j) = x(i, j);
      for (std::size_t j = 0; j < y.cols; ++j) out.y(i - begin, j) = y(i, j);
      out.a.push_back(a[i]);
    }
    return out;
  }
};

/// Per-dimension affine map to zero mean and unit variance.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer identity(std::size_t dims) { return {std::vector<double>(dims, 0.0), std::vector<double>(dims, 1.0)}; }

  static Standardizer fit(const Matrix& m) {
    require(m.rows >= 2, ErrorCode::invalid_argument, "standardizer: need at least two rows");
    Standardizer s{std::vector<double>(m.cols, 0.0), std::vector<double>(m.cols, 0.0)};
    const auto n = static_cast<double>(m.rows);
    for (std::size_t j = 0; j < m.cols; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < m.rows; ++i) sum += m(i, j);
      const double mu = sum / n;
      double sq = 0.0;
      for (std::size_t i = 0; i < m.rows; ++i) sq += (m(i, j) - mu) * (m(i, j) - mu);
      const double sd = std::sqrt(sq / (n - 1.0));
      s.mean[j] = mu;
      s.scale[j] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
  }

  [[nodiscard]] Matrix apply(const Matrix& m) const {
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows; ++i) {
      for (std::size_t j = 0; j < m.cols; ++j) out(i, j) = (m(i, j) - mean[j]) / scale[j];
    }
    return out;
  }

  [[nodiscard]] double to_standard(double v, std::size_t j) const { return (v - mean[j]) / scale[j]; }
  [[nodiscard]] double to_original(double v, std::size_t j) const { return v * scale[j] + mean[j]; }

  /// log|d standardized / d original|, summed over dimensions.
  [[nodiscard]] double log_jacobian() const {
    double s = 0.0;
    for (double c : scale) s -= std::log(c);
    return s;
  }
};

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

inline double parse_double(std::string_view s, const std::string& where) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(), ErrorCode::io,
          "csv: cannot parse '" + std::string(s) + "' at " + where);
  return v;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::string csv_header(int d_x, int d_y) {
  std::string h;
  for (int j = 1; j <= d_x; ++j) h += "x_" + std::to_string(j) + ",";
  h += "a";
  for (int j = 1; j <= d_y; ++j) h += ",y_" + std::to_string(j);
  return h;
}

inline Dataset read_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io, "csv: cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::io, "csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto names = split_csv_line(line);
  int d_x = 0;
  int d_y = 0;
  std::size_t a_col = names.size();
  for (std::size_t c = 0; c < names.size(); ++c) {
    const std::string_view n = names[c];
    if (n == "a") {
      a_col = c;
    } else if (n.starts_with("x_") && a_col == names.size()) {
      ++d_x;
    } else if (n.starts_with("y_") && a_col != names.size()) {
      ++d_y;
    } else {
      throw Error(ErrorCode::io, "csv: unexpected column '" + std::string(n) + "' in " + path);
    }
  }
  require(a_col != names.size() && d_y >= 1, ErrorCode::io, "csv: header must be x_1..x_d, a, y_1..y_d in " + path);
  require(line == csv_header(d_x, d_y), ErrorCode::io, "csv: columns out of order in " + path);

  std::vector<double> xs;
  std::vector<double> ys;
  Dataset ds;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const auto cells = split_csv_line(line);
    require(cells.size() == names.size(), ErrorCode::io,
            "csv: row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " cells in " + path);
    const std::string where = path + ":" + std::to_string(row + 1);
    for (int j = 0; j < d_x; ++j) xs.push_back(parse_double(cells[static_cast<std::size_t>(j)], where));
    ds.a.push_back(parse_double(cells[a_col], where));
    for (int j = 0; j < d_y; ++j) ys.push_back(parse_double(cells[a_col + 1 + static_cast<std::size_t>(j)], where));
  }
  ds.x = Matrix(row, static_cast<std::size_t>(d_x));
  ds.x.data = std::move(xs);
  ds.y = Matrix(row, static_cast<std::size_t>(d_y));
  ds.y.data = std::move(ys);
  ds.validate();
  return ds;
}

inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ostringstream out;
  out << csv_header(ds.d_x(), ds.d_y()) << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.x.cols; ++j) out << format_double(ds.x(i, j)) << ',';
    out << format_double(ds.a[i]);
    for (std::size_t j = 0; j < ds.y.cols; ++j) out << ',' << format_double(ds.y(i, j));
    out << '\n';
  }
  std::ofstream file(path, std::ios::binary);
  require(file.good(), ErrorCode::io, "csv: cannot write " + path);
  file << out.str();
}

}  // namespace ncsa::data
