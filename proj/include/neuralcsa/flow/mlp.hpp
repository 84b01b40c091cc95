#pragma once

// Fully connected network with ReLU hidden layers and a linear output.
// Parameters live in one flat vector: for each layer, the weight matrix
// (row-major, out x in) followed by the bias.

#include <cmath>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "neuralcsa/ad/tape.hpp"

namespace ncsa::flow {

struct MlpShape {
  std::vector<int> sizes;  // input, hidden..., output

  [[nodiscard]] int input_dim() const { return sizes.front(); }
  [[nodiscard]] int output_dim() const { return sizes.back(); }

  [[nodiscard]] std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      n += static_cast<std::size_t>(sizes[l + 1]) * static_cast<std::size_t>(sizes[l] + 1);
    }
    return n;
  }
};

template <class T>
std::vector<T> mlp_forward(const MlpShape& shape, std::span<const T> params, std::span<const T> input) {
  if (params.size() != shape.param_count()) throw std::invalid_argument("mlp: parameter count mismatch");
  if (input.size() != static_cast<std::size_t>(shape.input_dim())) {
    throw std::invalid_argument("mlp: input dimension mismatch");
  }
  std::vector<T> act(input.begin(), input.end());
  std::size_t offset = 0;
  const std::size_t layers = shape.sizes.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = static_cast<std::size_t>(shape.sizes[l]);
    const auto out = static_cast<std::size_t>(shape.sizes[l + 1]);
    const std::span<const T> weights = params.subspan(offset, out * in);
    const std::span<const T> bias = params.subspan(offset + out * in, out);
    offset += out * (in + 1);
    std::vector<T> next(out);
    for (std::size_t o = 0; o < out; ++o) {
      next[o] = ad::affine(weights.subspan(o * in, in), std::span<const T>(act), bias[o]);
      if (l + 1 < layers) next[o] = ad::relu(next[o]);
    }
    act = std::move(next);
  }
  return act;
}

/// Hidden layers uniform in +-1/sqrt(fan_in); the output layer has zero
/// weights and bias `output_bias`, so the initial network is constant.
inline std::vector<double> mlp_init(const MlpShape& shape, std::span<const double> output_bias,
                                    std::mt19937_64& rng) {
  if (output_bias.size() != static_cast<std::size_t>(shape.output_dim())) {
    throw std::invalid_argument("mlp: output bias size mismatch");
  }
  std::vector<double> params;
  params.reserve(shape.param_count());
  const std::size_t layers = shape.sizes.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = static_cast<std::size_t>(shape.sizes[l]);
    const auto out = static_cast<std::size_t>(shape.sizes[l + 1]);
    if (l + 1 == layers) {
      params.insert(params.end(), out * in, 0.0);
      params.insert(params.end(), output_bias.begin(), output_bias.end());
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (std::size_t i = 0; i < out * (in + 1); ++i) params.push_back(dist(rng));
    }
  }
  return params;
}

}  // namespace ncsa::flow
