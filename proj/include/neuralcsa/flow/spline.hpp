#pragma once

// Monotone rational-quadratic spline on [-B, B] with identity tails.
//
// The raw parameter block for one dimension is laid out as
//   [K width logits | K height logits | K-1 interior derivative pre-activations]
// Widths and heights go through a softmax (floored by a minimum bin size) and
// derivatives through a softplus, so every parameter vector yields a strictly
// increasing map. Boundary derivatives are fixed to 1 to match the tails.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "neuralcsa/ad/tape.hpp"

namespace ncsa::flow {

struct SplineShape {
  int num_bins = 8;
  double tail_bound = 10.0;
  double min_bin_width = 1e-3;
  double min_bin_height = 1e-3;
  double min_derivative = 1e-3;

  [[nodiscard]] int param_count() const { return 3 * num_bins - 1; }

  void validate() const {
    if (num_bins < 1) throw std::invalid_argument("spline: num_bins must be positive");
    if (!(tail_bound > 0.0)) throw std::invalid_argument("spline: tail_bound must be positive");
    if (min_bin_width * num_bins >= 1.0 || min_bin_height * num_bins >= 1.0) {
      throw std::invalid_argument("spline: minimum bin size too large for bin count");
    }
  }

  /// Raw block that activates to the identity map.
  [[nodiscard]] std::vector<double> identity_raw() const {
    std::vector<double> raw(static_cast<std::size_t>(param_count()), 0.0);
    const double d = ad::softplus_inverse(1.0 - min_derivative);
    std::fill(raw.begin() + 2 * num_bins, raw.end(), d);
    return raw;
  }
};

/// Activated knots: positions xs, ys and derivatives ds, each of length K+1.
template <class T>
struct SplineKnots {
  std::vector<T> xs;
  std::vector<T> ys;
  std::vector<T> ds;

  [[nodiscard]] int num_bins() const { return static_cast<int>(xs.size()) - 1; }
};

template <class T>
struct Transformed {
  T value;
  T log_det;
};

namespace detail {

// Cumulative knot positions from logits: floor + softmax, scaled to [-B, B].
template <class T>
std::vector<T> knot_positions(std::span<const T> logits, double min_size, double bound) {
  const std::size_t k = logits.size();
  double shift = ad::value(logits[0]);
  for (const T& l : logits) shift = std::max(shift, ad::value(l));
  std::vector<T> e(k);
  for (std::size_t i = 0; i < k; ++i) e[i] = ad::exp(logits[i] - shift);
  const T total = ad::sum(std::span<const T>(e));
  const double scale = 1.0 - min_size * static_cast<double>(k);
  std::vector<T> pos(k + 1);
  pos[0] = T(-bound);
  T running = T(0.0);
  for (std::size_t i = 0; i + 1 < k; ++i) {
    running = running + (min_size + scale * (e[i] / total));
    pos[i + 1] = -bound + 2.0 * bound * running;
  }
  pos[k] = T(bound);
  return pos;
}

inline std::size_t find_bin(std::span<const double> edges, double v) {
  // edges has K+1 entries; returns k with edges[k] <= v < edges[k+1].
  const auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, v);
  return static_cast<std::size_t>(it - edges.begin()) - 1;
}

template <class T>
std::vector<double> values_of(const std::vector<T>& xs) {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = ad::value(xs[i]);
  return out;
}

}  // namespace detail

/// Activates one dimension's raw parameter block into knots.
template <class T>
SplineKnots<T> make_knots(const SplineShape& shape, std::span<const T> raw) {
  const auto k = static_cast<std::size_t>(shape.num_bins);
  if (raw.size() != static_cast<std::size_t>(shape.param_count())) {
    throw std::invalid_argument("spline: raw parameter block has wrong size");
  }
  SplineKnots<T> knots;
  knots.xs = detail::knot_positions<T>(raw.subspan(0, k), shape.min_bin_width, shape.tail_bound);
  knots.ys = detail::knot_positions<T>(raw.subspan(k, k), shape.min_bin_height, shape.tail_bound);
  knots.ds.resize(k + 1);
  knots.ds[0] = T(1.0);
  knots.ds[k] = T(1.0);
  for (std::size_t i = 1; i < k; ++i) {
    knots.ds[i] = shape.min_derivative + ad::softplus(raw[2 * k + i - 1]);
  }
  return knots;
}

/// y = spline(x) and log dy/dx.
template <class T>
Transformed<T> rq_forward(const SplineKnots<T>& knots, double bound, const T& x) {
  const double xv = ad::value(x);
  if (xv < -bound || xv > bound) return {x, T(0.0)};
  const std::vector<double> edges = detail::values_of(knots.xs);
  const std::size_t k = detail::find_bin(edges, xv);

  const T w = knots.xs[k + 1] - knots.xs[k];
  const T h = knots.ys[k + 1] - knots.ys[k];
  const T s = h / w;
  const T& d0 = knots.ds[k];
  const T& d1 = knots.ds[k + 1];

  const T theta = (x - knots.xs[k]) / w;
  const T one_minus = 1.0 - theta;
  const T tt = theta * one_minus;
  const T theta2 = theta * theta;

  const T numerator = h * (s * theta2 + d0 * tt);
  const T denominator = s + (d0 + d1 - 2.0 * s) * tt;
  const T y = knots.ys[k] + numerator / denominator;

  const T deriv = s * s * (d1 * theta2 + 2.0 * s * tt + d0 * one_minus * one_minus);
  const T log_det = ad::log(deriv) - 2.0 * ad::log(denominator);
  return {y, log_det};
}

/// x = spline^{-1}(y) and log dx/dy.
template <class T>
Transformed<T> rq_inverse(const SplineKnots<T>& knots, double bound, const T& y) {
  const double yv = ad::value(y);
  if (yv < -bound || yv > bound) return {y, T(0.0)};
  const std::vector<double> edges = detail::values_of(knots.ys);
  const std::size_t k = detail::find_bin(edges, yv);

  const T w = knots.xs[k + 1] - knots.xs[k];
  const T h = knots.ys[k + 1] - knots.ys[k];
  const T s = h / w;
  const T& d0 = knots.ds[k];
  const T& d1 = knots.ds[k + 1];

  const T dy = y - knots.ys[k];
  const T c1 = d0 + d1 - 2.0 * s;
  const T qa = h * (s - d0) + dy * c1;
  const T qb = h * d0 - dy * c1;
  const T qc = -s * dy;
  T disc = qb * qb - 4.0 * qa * qc;
  if (ad::value(disc) < 0.0) disc = T(0.0);
  const T theta = (2.0 * qc) / (-qb - ad::sqrt(disc));
  const T x = theta * w + knots.xs[k];

  const T one_minus = 1.0 - theta;
  const T tt = theta * one_minus;
  const T denominator = s + c1 * tt;
  const T deriv = s * s * (d1 * theta * theta + 2.0 * s * tt + d0 * one_minus * one_minus);
  const T log_det = 2.0 * ad::log(denominator) - ad::log(deriv);
  return {x, log_det};
}

}  // namespace ncsa::flow
