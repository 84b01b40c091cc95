#pragma once

// Propensity models P(a | x).
//   binary:     MLP with three ReLU hidden layers and a two-way softmax,
//               trained on cross-entropy; outputs clamped to [1e-3, 1 - 1e-3].
//   continuous: 1-D conditional spline flow over the standardized treatment,
//               conditioned on x alone.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include <json.hpp>

#include "neuralcsa/ad/tape.hpp"
#include "neuralcsa/data/dataset.hpp"
#include "neuralcsa/error.hpp"
#include "neuralcsa/flow/checkpoint.hpp"
#include "neuralcsa/flow/mlp.hpp"
#include "neuralcsa/observational/stage1.hpp"
#include "neuralcsa/optim/adam.hpp"

namespace ncsa::observational {

inline constexpr double kPropensityFloor = 1e-3;

inline double clamp_propensity(double p) { return std::clamp(p, kPropensityFloor, 1.0 - kPropensityFloor); }

struct PropensityNetConfig {
  std::vector<int> hidden = {20, 20, 20};
  int num_bins = 8;  // continuous treatments only
};

class PropensityModel {
 public:
  /// Binary classifier from an MLP parameter vector.
  PropensityModel(flow::MlpShape shape, std::vector<double> params)
      : binary_(true), shape_(std::move(shape)), params_(std::move(params)) {
    require(params_.size() == shape_.param_count(), ErrorCode::dimension_mismatch,
            "propensity: parameter count mismatch");
    require(shape_.output_dim() == 2, ErrorCode::dimension_mismatch, "propensity: classifier needs two outputs");
  }

  /// Continuous treatment density from a 1-D flow over standardized a.
  PropensityModel(flow::ConditionalFlow density, data::Standardizer treatment)
      : binary_(false), density_(std::move(density)), treatment_(std::move(treatment)) {
    require(density_->config().d_y == 1 && density_->config().d_a == 0, ErrorCode::dimension_mismatch,
            "propensity: density flow must be 1-D and conditioned on x only");
  }

  [[nodiscard]] bool binary() const { return binary_; }
  [[nodiscard]] int d_x() const { return binary_ ? shape_.input_dim() : density_->config().d_x; }

  /// Clamped P(A = 1 | x).
  [[nodiscard]] double treated_probability(std::span<const double> x) const {
    require(binary_, ErrorCode::invalid_argument, "propensity: treated_probability needs a binary model");
    require(x.size() == static_cast<std::size_t>(d_x()), ErrorCode::dimension_mismatch,
            "propensity: covariate dimension mismatch");
    const std::vector<double> logits = flow::mlp_forward<double>(shape_, params_, x);
    const double p1 = 1.0 / (1.0 + std::exp(logits[0] - logits[1]));
    return clamp_propensity(p1);
  }

  /// P(A = a | x) for binary a, or the density of a given x for continuous a.
  [[nodiscard]] double probability(std::span<const double> x, double a) const {
    if (binary_) {
      require(a == 0.0 || a == 1.0, ErrorCode::invalid_argument, "propensity: binary treatment must be 0 or 1");
      const double p1 = treated_probability(x);
      return a == 1.0 ? p1 : 1.0 - p1;
    }
    const std::vector<double> z = {treatment_.to_standard(a, 0)};
    const std::vector<double> ctx(x.begin(), x.end());
    return std::exp(flow::conditional_log_prob(*density_, z, ctx) + treatment_.log_jacobian());
  }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j;
    j["format_version"] = flow::kCheckpointFormatVersion;
    j["kind"] = binary_ ? "propensity_binary" : "propensity_continuous";
    if (binary_) {
      j["layer_sizes"] = shape_.sizes;
      j["parameters"] = params_;
    } else {
      j["flow"] = flow::to_json(*density_);
      j["treatment_mean"] = treatment_.mean;
      j["treatment_scale"] = treatment_.scale;
    }
    return j;
  }

  static PropensityModel from_json(const nlohmann::json& j) {
    require(j.value("format_version", 0) == flow::kCheckpointFormatVersion, ErrorCode::invalid_argument,
            "propensity checkpoint: unsupported format_version");
    const std::string kind = j.value("kind", "");
    if (kind == "propensity_binary") {
      return {flow::MlpShape{j.at("layer_sizes").get<std::vector<int>>()},
              j.at("parameters").get<std::vector<double>>()};
    }
    require(kind == "propensity_continuous", ErrorCode::invalid_argument, "propensity checkpoint: unknown kind");
    return {flow::flow_from_json(j.at("flow")),
            data::Standardizer{j.at("treatment_mean").get<std::vector<double>>(),
                               j.at("treatment_scale").get<std::vector<double>>()}};
  }

 private:
  bool binary_;
  flow::MlpShape shape_;
  std::vector<double> params_;
  std::optional<flow::ConditionalFlow> density_;
  data::Standardizer treatment_;
};

namespace detail {

inline flow::MlpShape classifier_shape(int d_x, const std::vector<int>& hidden) {
  flow::MlpShape s;
  s.sizes.push_back(d_x);
  s.sizes.insert(s.sizes.end(), hidden.begin(), hidden.end());
  s.sizes.push_back(2);
  return s;
}

}  // namespace detail

/// Binary treatments: cross-entropy. Continuous treatments: flow likelihood.
inline PropensityModel fit_propensity(const data::Dataset& ds, const PropensityNetConfig& net, const TrainConfig& train) {
  ds.validate();
  if (!ds.binary_treatment()) {
    flow::FlowConfig fc;
    fc.d_x = ds.d_x();
    fc.d_a = 0;
    fc.d_y = 1;
    fc.num_bins = net.num_bins;
    fc.hidden = {net.hidden.front(), net.hidden.back()};
    Matrix a(ds.size(), 1);
    a.data = ds.a;
    const data::Standardizer st = data::Standardizer::fit(a);
    const Matrix z = st.apply(a);
    flow::ConditionalFlow f = fit_flow_mle(fc, ds, z, train, nullptr, nullptr);
    return {std::move(f), st};
  }
  const auto treated = static_cast<std::size_t>(std::count(ds.a.begin(), ds.a.end(), 1.0));
  require(treated > 0 && treated < ds.size(), ErrorCode::positivity,
          "propensity: dataset contains a single treatment class");

  const flow::MlpShape shape = detail::classifier_shape(ds.d_x(), net.hidden);
  std::mt19937_64 rng(train.seed);
  // Zero output layer: both classes start at probability 1/2.
  const std::vector<double> zero_bias = {0.0, 0.0};
  std::vector<double> params = flow::mlp_init(shape, zero_bias, rng);
  const auto n_val = static_cast<std::size_t>(std::floor(train.validation_fraction * static_cast<double>(ds.size())));
  const std::size_t n_train = ds.size() - n_val;
  require(n_train >= 1, ErrorCode::invalid_argument, "propensity: no training rows after validation split");
  optim::Adam adam(params.size(), {.lr = train.lr, .clip_norm = 100.0});
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  ad::Tape tape;
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(train.batch_size)) {
      const std::size_t end = std::min(n_train, start + static_cast<std::size_t>(train.batch_size));
      tape.clear();
      std::vector<double> grad;
      {
        ad::TapeScope scope(tape);
        const std::vector<ad::Var> p = tape.variables(params);
        std::vector<ad::Var> terms;
        for (std::size_t b = start; b < end; ++b) {
          const std::size_t i = order[b];
          const std::vector<ad::Var> xin(ds.x.row(i).begin(), ds.x.row(i).end());
          const std::vector<ad::Var> logits = flow::mlp_forward<ad::Var>(shape, p, xin);
          // -log softmax of the observed class, computed stably.
          const ad::Var diff = ds.a[i] == 1.0 ? logits[0] - logits[1] : logits[1] - logits[0];
          terms.push_back(ad::softplus(diff));
        }
        const ad::Var loss = ad::sum(std::span<const ad::Var>(terms)) * (1.0 / static_cast<double>(end - start));
        require(std::isfinite(loss.value()), ErrorCode::non_finite,
                "propensity: non-finite loss at epoch " + std::to_string(epoch));
        grad = tape.gradient(loss, p);
      }
      adam.step(params, grad);
    }
  }
  return {shape, std::move(params)};
}

}  // namespace ncsa::observational
