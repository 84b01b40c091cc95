#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ncsa {

/// Dense row-major matrix of doubles; rows are samples, columns dimensions.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  [[nodiscard]] std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  [[nodiscard]] std::vector<double> column(std::size_t j) const {
    std::vector<double> out(rows);
    for (std::size_t i = 0; i < rows; ++i) out[i] = (*this)(i, j);
    return out;
  }

  bool operator==(const Matrix&) const = default;
};

}  // namespace ncsa
