#pragma once

// Conditional autoregressive spline flow.
//
// The flow maps a standard-normal latent u in R^{d_y} to y. Outcome dimension
// order[j] is transformed by a rational-quadratic spline whose parameters are
// emitted by conditioner network j, fed with the context (x, a) and the
// already-transformed outputs y_{order[0..j-1]}. The Jacobian is triangular,
// so log-determinants are sums of per-dimension spline log-derivatives.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "neuralcsa/ad/tape.hpp"
#include "neuralcsa/error.hpp"
#include "neuralcsa/flow/mlp.hpp"
#include "neuralcsa/flow/spline.hpp"
#include "neuralcsa/matrix.hpp"

namespace ncsa::flow {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

struct FlowConfig {
  int d_x = 1;
  int d_a = 1;
  int d_y = 1;
  int num_bins = 8;
  double tail_bound = 10.0;
  std::vector<int> hidden = {20, 20};
  std::vector<int> conditioning_order;  // empty means 0..d_y-1

  [[nodiscard]] int context_dim() const { return d_x + d_a; }

  [[nodiscard]] SplineShape spline() const {
    SplineShape s;
    s.num_bins = num_bins;
    s.tail_bound = tail_bound;
    return s;
  }

  [[nodiscard]] std::vector<int> order() const {
    if (!conditioning_order.empty()) return conditioning_order;
    std::vector<int> o(static_cast<std::size_t>(d_y));
    for (int j = 0; j < d_y; ++j) o[static_cast<std::size_t>(j)] = j;
    return o;
  }

  /// Conditioner for autoregressive step j sees the context plus j outputs.
  [[nodiscard]] MlpShape conditioner(int step) const {
    MlpShape shape;
    shape.sizes.push_back(context_dim() + step);
    shape.sizes.insert(shape.sizes.end(), hidden.begin(), hidden.end());
    shape.sizes.push_back(spline().param_count());
    return shape;
  }

  [[nodiscard]] std::size_t param_count() const {
    std::size_t n = 0;
    for (int j = 0; j < d_y; ++j) n += conditioner(j).param_count();
    return n;
  }

  void validate() const {
    require(d_x >= 0 && d_a >= 0 && d_y >= 1, ErrorCode::invalid_argument,
            "flow config: need d_x >= 0, d_a >= 0, d_y >= 1");
    require(context_dim() + d_y - 1 >= 1, ErrorCode::invalid_argument,
            "flow config: conditioner would have no inputs");
    spline().validate();
    for (int h : hidden) require(h >= 1, ErrorCode::invalid_argument, "flow config: empty hidden layer");
    const std::vector<int> o = order();
    require(static_cast<int>(o.size()) == d_y, ErrorCode::invalid_argument,
            "flow config: conditioning order must list every outcome dimension");
    std::vector<bool> seen(static_cast<std::size_t>(d_y), false);
    for (int v : o) {
      require(v >= 0 && v < d_y && !seen[static_cast<std::size_t>(v)], ErrorCode::invalid_argument,
              "flow config: conditioning order is not a permutation");
      seen[static_cast<std::size_t>(v)] = true;
    }
  }

  bool operator==(const FlowConfig&) const = default;
};

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

template <class T>
T standard_normal_log_density(std::span<const T> u) {
  T acc = T(0.0);
  for (const T& v : u) acc = acc + (-0.5 * (v * v) - kLogSqrt2Pi);
  return acc;
}

class ConditionalFlow;

template <class T>
struct VectorTransformed {
  std::vector<T> value;
  T log_det;
};

/// A flow with its context and parameter vector fixed. The first step's
/// knots depend only on the context and are computed once.
template <class T>
class FlowAtContext {
 public:
  FlowAtContext(const FlowConfig& config, std::span<const T> params, std::span<const double> context)
      : config_(&config), params_(params), order_(config.order()), shape_(config.spline()) {
    require(context.size() == static_cast<std::size_t>(config.context_dim()), ErrorCode::dimension_mismatch,
            [&] {
              return "flow: context has " + std::to_string(context.size()) + " entries, expected " +
                     std::to_string(config.context_dim());
            });
    input_.reserve(static_cast<std::size_t>(config.context_dim() + config.d_y));
    for (double c : context) input_.push_back(T(c));
    first_ = knots_for(0, {});
  }

  [[nodiscard]] const SplineKnots<T>& first_knots() const { return first_; }

  /// y = f(u) and log|det dy/du|.
  VectorTransformed<T> forward(std::span<const T> u) const {
    check_dim(u.size());
    const auto d = static_cast<std::size_t>(config_->d_y);
    std::vector<T> y(d);
    std::vector<T> done;
    done.reserve(d);
    T log_det = T(0.0);
    for (std::size_t j = 0; j < d; ++j) {
      const auto dim = static_cast<std::size_t>(order_[j]);
      const Transformed<T> r = j == 0 ? rq_forward(first_, shape_.tail_bound, u[dim])
                                      : rq_forward(knots_for(static_cast<int>(j), done), shape_.tail_bound, u[dim]);
      y[dim] = r.value;
      done.push_back(r.value);
      log_det = log_det + r.log_det;
    }
    return {std::move(y), log_det};
  }

  /// u = f^{-1}(y) and log|det du/dy|.
  VectorTransformed<T> inverse(std::span<const T> y) const {
    check_dim(y.size());
    const auto d = static_cast<std::size_t>(config_->d_y);
    std::vector<T> u(d);
    std::vector<T> done;
    done.reserve(d);
    T log_det = T(0.0);
    for (std::size_t j = 0; j < d; ++j) {
      const auto dim = static_cast<std::size_t>(order_[j]);
      const Transformed<T> r = j == 0 ? rq_inverse(first_, shape_.tail_bound, y[dim])
                                      : rq_inverse(knots_for(static_cast<int>(j), done), shape_.tail_bound, y[dim]);
      u[dim] = r.value;
      done.push_back(y[dim]);
      log_det = log_det + r.log_det;
    }
    return {std::move(u), log_det};
  }

  /// log density of y under the pushforward of N(0, I).
  T log_prob(std::span<const T> y) const {
    const VectorTransformed<T> inv = inverse(y);
    return standard_normal_log_density<T>(std::span<const T>(inv.value)) + inv.log_det;
  }

 private:
  SplineKnots<T> knots_for(int step, std::span<const T> previous) const {
    std::size_t offset = 0;
    for (int j = 0; j < step; ++j) offset += config_->conditioner(j).param_count();
    const MlpShape net = config_->conditioner(step);
    std::vector<T> in(input_);
    in.insert(in.end(), previous.begin(), previous.end());
    const std::vector<T> raw = mlp_forward<T>(net, params_.subspan(offset, net.param_count()), in);
    return make_knots<T>(shape_, raw);
  }

  void check_dim(std::size_t n) const {
    require(n == static_cast<std::size_t>(config_->d_y), ErrorCode::dimension_mismatch,
            [&] { return "flow: expected " + std::to_string(config_->d_y) + " outcome dimensions, got " + std::to_string(n); });
  }

  const FlowConfig* config_;
  std::span<const T> params_;
  std::vector<int> order_;
  SplineShape shape_;
  std::vector<T> input_;
  SplineKnots<T> first_;
};

/// Immutable conditional flow: configuration plus a flat parameter vector.
class ConditionalFlow {
 public:
  ConditionalFlow(FlowConfig config, std::vector<double> params)
      : config_(std::move(config)), params_(std::move(params)) {
    config_.validate();
    require(params_.size() == config_.param_count(), ErrorCode::dimension_mismatch,
            "flow: parameter vector has " + std::to_string(params_.size()) + " entries, expected " +
                std::to_string(config_.param_count()));
    require(all_finite(params_), ErrorCode::non_finite, "flow: non-finite parameter");
  }

  /// Random hidden layers, output layer emitting the identity spline.
  static ConditionalFlow identity(const FlowConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    const std::vector<double> bias = config.spline().identity_raw();
    std::vector<double> params;
    for (int j = 0; j < config.d_y; ++j) {
      const std::vector<double> block = mlp_init(config.conditioner(j), bias, rng);
      params.insert(params.end(), block.begin(), block.end());
    }
    return {config, std::move(params)};
  }

  [[nodiscard]] const FlowConfig& config() const { return config_; }
  [[nodiscard]] std::span<const double> parameters() const { return params_; }

  template <class T>
  [[nodiscard]] FlowAtContext<T> at(std::span<const T> params, std::span<const double> context) const {
    return FlowAtContext<T>(config_, params, context);
  }

  [[nodiscard]] FlowAtContext<double> at(std::span<const double> context) const {
    return FlowAtContext<double>(config_, std::span<const double>(params_), context);
  }

 private:
  FlowConfig config_;
  std::vector<double> params_;
};

/// Concatenates covariates and treatment into the conditioning context.
inline std::vector<double> make_context(std::span<const double> x, std::span<const double> a) {
  std::vector<double> c(x.begin(), x.end());
  c.insert(c.end(), a.begin(), a.end());
  return c;
}

inline std::vector<double> make_context(std::span<const double> x, double a) {
  return make_context(x, std::span<const double>(&a, 1));
}

struct FlowResult {
  std::vector<double> value;
  double log_det = 0.0;
};

namespace detail {
inline void check_inputs(const ConditionalFlow& flow, std::span<const double> v, std::span<const double> context,
                         const char* what) {
  require(all_finite(v), ErrorCode::non_finite, [&] { return std::string("flow: non-finite ") + what; });
  require(all_finite(context), ErrorCode::non_finite, "flow: non-finite conditioning input");
  (void)flow;
}
}  // namespace detail

/// y = f_{x,a}(u) with log|det dy/du|.
inline FlowResult transform_forward(const ConditionalFlow& flow, std::span<const double> u,
                                    std::span<const double> context) {
  detail::check_inputs(flow, u, context, "latent input");
  auto r = flow.at(context).forward(u);
  return {std::move(r.value), r.log_det};
}

/// u = f_{x,a}^{-1}(y) with log|det du/dy|.
inline FlowResult transform_inverse(const ConditionalFlow& flow, std::span<const double> y,
                                    std::span<const double> context) {
  detail::check_inputs(flow, y, context, "outcome input");
  auto r = flow.at(context).inverse(y);
  return {std::move(r.value), r.log_det};
}

inline double conditional_log_prob(const ConditionalFlow& flow, std::span<const double> y,
                                   std::span<const double> context) {
  detail::check_inputs(flow, y, context, "outcome input");
  return flow.at(context).log_prob(y);
}

inline FlowResult transform_forward(const ConditionalFlow& flow, std::span<const double> u,
                                    std::span<const double> x, double a) {
  return transform_forward(flow, u, make_context(x, a));
}

inline FlowResult transform_inverse(const ConditionalFlow& flow, std::span<const double> y,
                                    std::span<const double> x, double a) {
  return transform_inverse(flow, y, make_context(x, a));
}

inline double conditional_log_prob(const ConditionalFlow& flow, std::span<const double> y,
                                   std::span<const double> x, double a) {
  return conditional_log_prob(flow, y, make_context(x, a));
}

/// `count` rows f(u_i) with u_i ~ N(0, I), drawn row-major from `seed`.
inline Matrix conditional_sample(const ConditionalFlow& flow, std::span<const double> context, std::size_t count,
                                 std::uint64_t seed) {
  require(count >= 1, ErrorCode::invalid_argument, "flow: sample count must be positive");
  require(all_finite(context), ErrorCode::non_finite, "flow: non-finite conditioning input");
  const auto d = static_cast<std::size_t>(flow.config().d_y);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const FlowAtContext<double> f = flow.at(context);
  Matrix out(count, d);
  std::vector<double> u(d);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < d; ++j) u[j] = normal(rng);
    const auto r = f.forward(u);
    for (std::size_t j = 0; j < d; ++j) out(i, j) = r.value[j];
  }
  return out;
}

}  // namespace ncsa::flow
