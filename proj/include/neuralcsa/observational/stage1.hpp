#pragma once

// Stage 1: maximum-likelihood fit of the observational outcome distribution
// P(Y | x, a) with a conditional flow on standardized outcomes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuralcsa/ad/tape.hpp"
#include "neuralcsa/data/dataset.hpp"
#include "neuralcsa/error.hpp"
#include "neuralcsa/flow/checkpoint.hpp"
#include "neuralcsa/flow/conditional_flow.hpp"
#include "neuralcsa/optim/adam.hpp"

namespace ncsa::observational {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 128;
  double lr = 1e-3;
  double validation_fraction = 0.1;  // trailing rows; reported, never used for stopping
  std::uint64_t seed = 0;
};

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  base.epochs = j.value("epochs", base.epochs);
  base.batch_size = j.value("batch_size", base.batch_size);
  base.lr = j.value("lr", base.lr);
  base.validation_fraction = j.value("validation_fraction", base.validation_fraction);
  base.seed = j.value("seed", base.seed);
  require(base.epochs >= 0 && base.batch_size >= 1 && base.lr > 0.0, ErrorCode::invalid_argument,
          "train config: need epochs >= 0, batch_size >= 1, lr > 0");
  require(base.validation_fraction >= 0.0 && base.validation_fraction < 1.0, ErrorCode::invalid_argument,
          "train config: validation_fraction must lie in [0, 1)");
  return base;
}

/// Flow over standardized outcomes plus the standardization it was fit with.
struct Stage1Model {
  flow::ConditionalFlow flow;
  data::Standardizer outcome;
  bool binary_treatment = true;
  int epochs = 0;
  double final_loss = 0.0;
  double validation_loss = 0.0;
  std::uint64_t seed = 0;

  [[nodiscard]] int d_x() const { return flow.config().d_x; }
  [[nodiscard]] int d_y() const { return flow.config().d_y; }

  /// log p(y | x, a) in original outcome units.
  [[nodiscard]] double log_prob(std::span<const double> y, std::span<const double> x, double a) const {
    std::vector<double> z(y.size());
    for (std::size_t j = 0; j < y.size(); ++j) z[j] = outcome.to_standard(y[j], j);
    return flow::conditional_log_prob(flow, z, x, a) + outcome.log_jacobian();
  }
};

/// Thrown when a training loss turns non-finite; carries the last finite flow.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& what, flow::ConditionalFlow last_finite)
      : Error(ErrorCode::non_finite, what), last_finite_(std::move(last_finite)) {}
  [[nodiscard]] const flow::ConditionalFlow& last_finite() const { return last_finite_; }

 private:
  flow::ConditionalFlow last_finite_;
};

namespace detail {

/// Mean negative log-likelihood of standardized rows `idx`; gradient into `grad` when non-null.
inline double batch_nll(const flow::ConditionalFlow& f, const data::Dataset& ds, const Matrix& z,
                        std::span<const std::size_t> idx, std::vector<double>* grad, ad::Tape& tape) {
  const auto& cfg = f.config();
  std::vector<double> ctx(static_cast<std::size_t>(cfg.context_dim()));
  if (grad == nullptr) {
    double total = 0.0;
    for (std::size_t i : idx) {
      std::copy(ds.x.row(i).begin(), ds.x.row(i).end(), ctx.begin());
      if (cfg.d_a > 0) ctx.back() = ds.a[i];
      total -= f.at(ctx).log_prob(z.row(i));
    }
    return total / static_cast<double>(idx.size());
  }
  tape.clear();
  ad::TapeScope scope(tape);
  const std::vector<ad::Var> p = tape.variables(f.parameters());
  std::vector<ad::Var> terms;
  terms.reserve(idx.size());
  std::vector<ad::Var> yv(static_cast<std::size_t>(cfg.d_y));
  for (std::size_t i : idx) {
    std::copy(ds.x.row(i).begin(), ds.x.row(i).end(), ctx.begin());
    if (cfg.d_a > 0) ctx.back() = ds.a[i];
    for (std::size_t j = 0; j < yv.size(); ++j) yv[j] = ad::Var(z(i, j));
    terms.push_back(f.at<ad::Var>(p, ctx).log_prob(yv));
  }
  const ad::Var loss = ad::sum(std::span<const ad::Var>(terms)) * (-1.0 / static_cast<double>(idx.size()));
  *grad = tape.gradient(loss, p);
  return loss.value();
}

}  // namespace detail

/// Minibatch Adam on the negative log-likelihood of `flow_config` outcomes.
/// The context is (x, a) when flow_config.d_a == 1 and x alone when 0.
inline flow::ConditionalFlow fit_flow_mle(const flow::FlowConfig& flow_config, const data::Dataset& ds,
                                          const Matrix& z, const TrainConfig& train, double* final_loss,
                                          double* validation_loss) {
  const std::size_t n = ds.size();
  const auto n_val = static_cast<std::size_t>(std::floor(train.validation_fraction * static_cast<double>(n)));
  const std::size_t n_train = n - n_val;
  require(n_train >= 1, ErrorCode::invalid_argument, "stage1: no training rows after validation split");

  std::mt19937_64 rng(train.seed);
  flow::ConditionalFlow f = flow::ConditionalFlow::identity(flow_config, rng());
  std::vector<double> params(f.parameters().begin(), f.parameters().end());
  optim::Adam adam(params.size(), {.lr = train.lr, .clip_norm = 100.0});
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad;
  ad::Tape tape;
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(train.batch_size)) {
      const std::size_t end = std::min(n_train, start + static_cast<std::size_t>(train.batch_size));
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const double loss = detail::batch_nll(f, ds, z, idx, &grad, tape);
      if (!std::isfinite(loss) || !flow::all_finite(grad)) {
        throw TrainingAborted("stage1: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting " +
                                  std::to_string(start),
                              f);
      }
      adam.step(params, grad);
      if (!flow::all_finite(params)) {
        throw TrainingAborted("stage1: non-finite parameters at epoch " + std::to_string(epoch), f);
      }
      f = flow::ConditionalFlow(flow_config, params);
    }
  }
  std::vector<std::size_t> all(n_train);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (final_loss != nullptr) *final_loss = detail::batch_nll(f, ds, z, all, nullptr, tape);
  if (validation_loss != nullptr) {
    std::vector<std::size_t> val(n_val);
    std::iota(val.begin(), val.end(), n_train);
    *validation_loss = n_val > 0 ? detail::batch_nll(f, ds, z, val, nullptr, tape) : NAN;
  }
  return f;
}

/// Standardizes outcomes on the training rows, then fits the flow.
inline Stage1Model fit_stage1(const data::Dataset& ds, flow::FlowConfig flow_config, const TrainConfig& train) {
  ds.validate();
  flow_config.d_x = ds.d_x();
  flow_config.d_a = 1;
  flow_config.d_y = ds.d_y();
  flow_config.validate();
  const auto n_val = static_cast<std::size_t>(std::floor(train.validation_fraction * static_cast<double>(ds.size())));
  const data::Standardizer st =
      ds.size() - n_val >= 2 ? data::Standardizer::fit(ds.slice(0, ds.size() - n_val).y)
                             : data::Standardizer::identity(ds.y.cols);
  const Matrix z = st.apply(ds.y);
  double final_loss = NAN;
  double val_loss = NAN;
  flow::ConditionalFlow f = fit_flow_mle(flow_config, ds, z, train, &final_loss, &val_loss);
  return {std::move(f), st, ds.binary_treatment(), train.epochs, final_loss, val_loss, train.seed};
}

inline nlohmann::json to_json(const Stage1Model& m) {
  nlohmann::json j;
  j["format_version"] = flow::kCheckpointFormatVersion;
  j["kind"] = "stage1";
  j["flow"] = flow::to_json(m.flow);
  j["outcome_mean"] = m.outcome.mean;
  j["outcome_scale"] = m.outcome.scale;
  j["binary_treatment"] = m.binary_treatment;
  j["epochs"] = m.epochs;
  j["final_loss"] = m.final_loss;
  j["validation_loss"] = std::isfinite(m.validation_loss) ? nlohmann::json(m.validation_loss) : nlohmann::json();
  j["seed"] = m.seed;
  return j;
}

inline Stage1Model stage1_from_json(const nlohmann::json& j) {
  require(j.value("format_version", 0) == flow::kCheckpointFormatVersion && j.value("kind", "") == "stage1",
          ErrorCode::invalid_argument, "stage1 checkpoint: wrong kind or format_version");
  Stage1Model m{flow::flow_from_json(j.at("flow")),
                {j.at("outcome_mean").get<std::vector<double>>(), j.at("outcome_scale").get<std::vector<double>>()},
                j.at("binary_treatment").get<bool>(),
                j.value("epochs", 0),
                j.value("final_loss", 0.0),
                j.contains("validation_loss") && j.at("validation_loss").is_number() ? j.at("validation_loss").get<double>() : NAN,
                j.value("seed", std::uint64_t{0})};
  require(m.outcome.mean.size() == static_cast<std::size_t>(m.d_y()), ErrorCode::dimension_mismatch,
          "stage1 checkpoint: standardization size differs from d_y");
  return m;
}

}  // namespace ncsa::observational
