#pragma once

// Stage 2: learn the latent shift f~ that extremizes the query subject to the
// sensitivity constraint, with the augmented Lagrangian method.
//
// Inner step on a minibatch of units i (objective minimized):
//   J = -mean_i L2_i + mean_i psi(s_i, lambda_{key(i)}, mu),   s_i = Gamma - D_i,
//   psi = -lambda s + (mu / 2) s^2   if s <= lambda / mu,
//         -lambda^2 / (2 mu)         otherwise (inequality form; constant in s).
// After each outer iteration, on a fixed evaluation batch:
//   lambda_key <- max(0, lambda_key - mu * mean s over units with that key),  mu <- alpha mu.
// Multipliers are keyed by (quantile bin of mean(x), treatment bin).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuralcsa/ad/tape.hpp"
#include "neuralcsa/data/dataset.hpp"
#include "neuralcsa/error.hpp"
#include "neuralcsa/flow/checkpoint.hpp"
#include "neuralcsa/flow/conditional_flow.hpp"
#include "neuralcsa/observational/propensity.hpp"
#include "neuralcsa/observational/stage1.hpp"
#include "neuralcsa/optim/adam.hpp"
#include "neuralcsa/queries/query.hpp"
#include "neuralcsa/queries/shifted.hpp"
#include "neuralcsa/sensitivity/estimate.hpp"
#include "neuralcsa/sensitivity/models.hpp"

namespace ncsa::stage2 {

struct AugLagConfig {
  int k = 256;
  int n1 = 20;
  int n2 = 100;
  int batch_size = 32;
  double lr = 5e-3;
  double lr_decay = 1.0;   // learning rate multiplier per outer iteration
  double clip_norm = 1.0;  // global gradient norm cap; 0 disables
  double mu0 = 1.0;
  double alpha = 2.0;
  double eps_constraint = 0.05;
  int x_bins = 10;         // multiplier key resolution over mean(x)
  int a_bins = 4;          // continuous treatments only
  int eval_units = 64;     // fixed batch for multiplier updates and traces
  int check_units = 64;    // fresh batch for the final feasibility check
  std::vector<int> hidden = {20, 20};
  int num_bins = 8;

  void validate() const {
    require(k >= 2 && n1 >= 1 && n2 >= 1 && batch_size >= 1 && eval_units >= 1 && check_units >= 1,
            ErrorCode::invalid_argument, "auglag: k, n1, n2, batch_size and evaluation sizes must be positive");
    require(lr > 0.0 && lr_decay > 0.0 && lr_decay <= 1.0 && clip_norm >= 0.0 && mu0 > 0.0 && alpha > 1.0 && eps_constraint >= 0.0, ErrorCode::invalid_argument,
            "auglag: need lr > 0, lr_decay in (0, 1], mu0 > 0, alpha > 1, eps_constraint >= 0");
    require(x_bins >= 1 && a_bins >= 1, ErrorCode::invalid_argument, "auglag: multiplier bins must be positive");
  }
};

inline AugLagConfig auglag_from_json(const nlohmann::json& j, AugLagConfig c = {}) {
  c.k = j.value("k", c.k);
  c.n1 = j.value("n1", c.n1);
  c.n2 = j.value("n2", c.n2);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.mu0 = j.value("mu0", c.mu0);
  c.alpha = j.value("alpha", c.alpha);
  c.eps_constraint = j.value("eps_constraint", c.eps_constraint);
  c.x_bins = j.value("x_bins", c.x_bins);
  c.a_bins = j.value("a_bins", c.a_bins);
  c.eval_units = j.value("eval_units", c.eval_units);
  c.check_units = j.value("check_units", c.check_units);
  c.hidden = j.value("layer_sizes", c.hidden);
  c.num_bins = j.value("num_bins", c.num_bins);
  c.validate();
  return c;
}

inline nlohmann::json to_json(const AugLagConfig& c) {
  return {{"k", c.k},           {"n1", c.n1},         {"n2", c.n2},
          {"batch_size", c.batch_size}, {"lr", c.lr}, {"lr_decay", c.lr_decay}, {"clip_norm", c.clip_norm}, {"mu0", c.mu0},
          {"alpha", c.alpha},   {"eps_constraint", c.eps_constraint},
          {"x_bins", c.x_bins}, {"a_bins", c.a_bins}, {"eval_units", c.eval_units},
          {"check_units", c.check_units}, {"layer_sizes", c.hidden}, {"num_bins", c.num_bins}};
}

/// P(a | x) for binary treatments; empty for continuous treatments.
using PropensityFn = std::function<std::optional<double>(std::span<const double> x, double a)>;

inline PropensityFn propensity_from_model(const observational::PropensityModel& m) {
  if (!m.binary()) return [](std::span<const double>, double) { return std::optional<double>(); };
  return [&m](std::span<const double> x, double a) { return std::optional<double>(m.probability(x, a)); };
}

inline PropensityFn continuous_propensity() {
  return [](std::span<const double>, double) { return std::optional<double>(); };
}

struct TraceRow {
  int outer = 0;
  double mu = 0.0;
  double mean_lambda = 0.0;
  double mean_violation = 0.0;  // mean max(0, D - Gamma) over the evaluation batch
  double max_constraint = 0.0;
  double objective = 0.0;       // mean query term over the evaluation batch (maximized)
  std::size_t empty_region_units = 0;
};

struct Stage2Model {
  flow::ConditionalFlow flow;
  sensitivity::SensitivitySpec spec;
  queries::QuerySpec query;
  std::optional<double> treatment;  // fixed target arm / dose; empty means observed a
  bool feasible = true;
  double max_constraint = 0.0;      // fresh-sample max of D over the check batch
  std::vector<TraceRow> trace;
  std::uint64_t seed = 0;
};

namespace detail {

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Multiplier keys from quantile bins of mean(x) and treatment bins.
class KeyMap {
 public:
  KeyMap(const data::Dataset& ds, const AugLagConfig& cfg, bool binary) : binary_(binary), a_bins_(cfg.a_bins) {
    std::vector<double> m(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) m[i] = mean_of(ds.x.row(i));
    std::sort(m.begin(), m.end());
    for (int b = 1; b < cfg.x_bins; ++b) {
      edges_.push_back(m[static_cast<std::size_t>(b) * (m.size() - 1) / static_cast<std::size_t>(cfg.x_bins)]);
    }
    a_lo_ = *std::min_element(ds.a.begin(), ds.a.end());
    a_hi_ = *std::max_element(ds.a.begin(), ds.a.end());
  }

  [[nodiscard]] int key(std::span<const double> x, double a) const {
    const double mx = mean_of(x);
    const int xb = static_cast<int>(std::upper_bound(edges_.begin(), edges_.end(), mx) - edges_.begin());
    int ab = 0;
    if (binary_) {
      ab = a == 1.0 ? 1 : 0;
    } else if (a_hi_ > a_lo_) {
      ab = std::clamp(static_cast<int>((a - a_lo_) / (a_hi_ - a_lo_) * a_bins_), 0, a_bins_ - 1);
    }
    return xb * (binary_ ? 2 : a_bins_) + ab;
  }

 private:
  bool binary_;
  int a_bins_;
  std::vector<double> edges_;
  double a_lo_ = 0.0;
  double a_hi_ = 0.0;
};

struct Unit {
  std::size_t row;
  std::vector<double> ctx;
  std::optional<double> pi;
  queries::LatentDraws draws;
};

struct UnitStats {
  double constraint;
  double objective;
  std::size_t in_region;
};

}  // namespace detail

class Trainer {
 public:
  Trainer(const observational::Stage1Model& stage1, PropensityFn propensity, sensitivity::SensitivitySpec spec,
          queries::QuerySpec query, const data::Dataset& dataset, AugLagConfig cfg, std::optional<double> treatment,
          std::uint64_t seed)
      : stage1_(stage1),
        propensity_(std::move(propensity)),
        spec_(std::move(spec)),
        query_(std::move(query)),
        data_(dataset),
        cfg_(std::move(cfg)),
        treatment_(treatment),
        seed_(seed),
        keys_(dataset, cfg_, dataset.binary_treatment()),
        stage1_const_(queries::constant_parameters(stage1.flow.parameters())) {
    cfg_.validate();
    spec_.validate();
    dataset.validate();
    query_.validate(stage1.d_y());
    require(dataset.d_x() == stage1.d_x() && dataset.d_y() == stage1.d_y(), ErrorCode::dimension_mismatch,
            "stage2: dataset dimensions differ from the Stage-1 model");
    if (treatment_ && dataset.binary_treatment()) {
      require(*treatment_ == 0.0 || *treatment_ == 1.0, ErrorCode::invalid_argument,
              "stage2: binary treatment target must be 0 or 1");
    }
    scaled_query_ = queries::standardized(query_, stage1.outcome);
    flow_config_ = stage1.flow.config();
    flow_config_.hidden = cfg_.hidden;
    flow_config_.num_bins = cfg_.num_bins;
  }

  Stage2Model train() {
    std::mt19937_64 seeds(seed_);
    std::mt19937_64 batch_rng(seeds());
    std::mt19937_64 eval_rng(seeds());
    std::mt19937_64 check_rng(seeds());
    const std::uint64_t init_seed = seeds();

    flow::ConditionalFlow f = flow::ConditionalFlow::identity(flow_config_, init_seed);
    std::vector<double> params(f.parameters().begin(), f.parameters().end());
    optim::Adam adam(params.size(), {.lr = cfg_.lr, .clip_norm = cfg_.clip_norm});
    const std::vector<detail::Unit> eval_units = draw_units(static_cast<std::size_t>(cfg_.eval_units), eval_rng);

    std::map<int, double> lambda;
    double mu = cfg_.mu0;
    std::vector<TraceRow> trace;
    ad::Tape tape;
    std::vector<double> grad;
    for (int outer = 0; outer < cfg_.n1; ++outer) {
      std::size_t empty_units = 0;
      adam.set_lr(cfg_.lr * std::pow(cfg_.lr_decay, outer));
      for (int inner = 0; inner < cfg_.n2; ++inner) {
        const std::vector<detail::Unit> batch = draw_units(static_cast<std::size_t>(cfg_.batch_size), batch_rng);
        const double obj = step(f, batch, lambda, mu, tape, grad, &empty_units);
        require(std::isfinite(obj) && flow::all_finite(grad), ErrorCode::non_finite,
                [&] {
                  return "stage2: non-finite objective at outer " + std::to_string(outer) + ", inner " +
                         std::to_string(inner) + " (mu = " + std::to_string(mu) + ")";
                });
        adam.step(params, grad);
        f = flow::ConditionalFlow(flow_config_, params);
      }
      // Multiplier update on the fixed evaluation batch.
      std::map<int, std::pair<double, int>> slack;
      TraceRow row;
      row.outer = outer;
      row.mu = mu;
      row.empty_region_units = empty_units;
      std::vector<double> violations;
      std::vector<double> objectives;
      for (const detail::Unit& u : eval_units) {
        const detail::UnitStats st = evaluate_unit(f, u);
        const int key = unit_key(u);
        slack[key].first += spec_.gamma - st.constraint;
        slack[key].second += 1;
        violations.push_back(std::max(0.0, st.constraint - spec_.gamma));
        objectives.push_back(st.objective);
        row.max_constraint = std::max(row.max_constraint, st.constraint);
      }
      for (const auto& [key, acc] : slack) {
        lambda[key] = std::max(0.0, lambda[key] - mu * acc.first / acc.second);
      }
      std::vector<double> lams;
      for (const auto& [key, l] : lambda) lams.push_back(l);
      row.mean_lambda = detail::mean_of(lams);
      row.mean_violation = detail::mean_of(violations);
      row.objective = detail::mean_of(objectives);
      trace.push_back(row);
      mu *= cfg_.alpha;
    }

    Stage2Model model{f, spec_, query_, treatment_, true, 0.0, std::move(trace), seed_};
    const std::vector<detail::Unit> check = draw_units(static_cast<std::size_t>(cfg_.check_units), check_rng);
    for (const detail::Unit& u : check) {
      model.max_constraint = std::max(model.max_constraint, evaluate_unit(f, u).constraint);
    }
    model.feasible = model.max_constraint <= spec_.gamma * (1.0 + cfg_.eps_constraint);
    return model;
  }

 private:
  [[nodiscard]] double unit_treatment(std::size_t row) const { return treatment_ ? *treatment_ : data_.a[row]; }

  [[nodiscard]] int unit_key(const detail::Unit& u) const {
    return keys_.key(data_.x.row(u.row), unit_treatment(u.row));
  }

  std::vector<detail::Unit> draw_units(std::size_t count, std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    std::vector<detail::Unit> out;
    out.reserve(count);
    for (std::size_t b = 0; b < count; ++b) {
      const std::size_t row = pick(rng);
      const double a = unit_treatment(row);
      std::optional<double> pi = propensity_(data_.x.row(row), a);
      if (pi) pi = observational::clamp_propensity(*pi);
      out.push_back({row, flow::make_context(data_.x.row(row), a), pi,
                     queries::draw_latent(static_cast<std::size_t>(cfg_.k), static_cast<std::size_t>(stage1_.d_y()),
                                          pi, rng)});
    }
    return out;
  }

  detail::UnitStats evaluate_unit(const flow::ConditionalFlow& f, const detail::Unit& u) const {
    const auto s1 = stage1_.flow.at(u.ctx);
    const auto s2 = f.at(u.ctx);
    queries::UnitLoss info;
    const double obj = queries::stage2_loss<double>(scaled_query_, u.draws, s1, s1, s2, s2, u.pi, &info);
    const double d = sensitivity::constraint_estimate<double>(spec_, s2, u.draws.u, u.pi);
    return {d, obj, info.in_region};
  }

  double step(const flow::ConditionalFlow& f, const std::vector<detail::Unit>& batch, std::map<int, double>& lambda,
              double mu, ad::Tape& tape, std::vector<double>& grad, std::size_t* empty_units) const {
    tape.clear();
    ad::TapeScope scope(tape);
    const std::vector<ad::Var> p = tape.variables(f.parameters());
    std::vector<ad::Var> terms;
    terms.reserve(batch.size());
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const detail::Unit& u : batch) {
      const auto s1_values = stage1_.flow.at(u.ctx);
      const auto s1_vars = stage1_.flow.at<ad::Var>(std::span<const ad::Var>(stage1_const_), u.ctx);
      const auto s2_values = f.at(u.ctx);
      const auto s2_vars = f.at<ad::Var>(std::span<const ad::Var>(p), u.ctx);
      queries::UnitLoss info;
      const ad::Var l2 =
          queries::stage2_loss<ad::Var>(scaled_query_, u.draws, s1_vars, s1_values, s2_vars, s2_values, u.pi, &info);
      if (query_.type != queries::QueryType::expectation && info.in_region == 0) ++*empty_units;
      const ad::Var d = sensitivity::constraint_estimate<ad::Var>(spec_, s2_vars, u.draws.u, u.pi);
      const ad::Var s = spec_.gamma - d;
      const double lam = lambda.count(unit_key(u)) != 0 ? lambda.at(unit_key(u)) : 0.0;
      if (s.value() <= lam / mu) {
        terms.push_back(-l2 - lam * s + (0.5 * mu) * ad::square(s));
      } else {
        terms.push_back(-l2 - lam * lam / (2.0 * mu));
      }
    }
    const ad::Var objective = ad::sum(std::span<const ad::Var>(terms)) * inv_b;
    grad = tape.gradient(objective, p);
    return objective.value();
  }

  const observational::Stage1Model& stage1_;
  PropensityFn propensity_;
  sensitivity::SensitivitySpec spec_;
  queries::QuerySpec query_;
  queries::QuerySpec scaled_query_;
  const data::Dataset& data_;
  AugLagConfig cfg_;
  std::optional<double> treatment_;
  std::uint64_t seed_;
  detail::KeyMap keys_;
  flow::FlowConfig flow_config_;
  std::vector<ad::Var> stage1_const_;
};

inline Stage2Model train_stage2(const observational::Stage1Model& stage1, const PropensityFn& propensity,
                                const sensitivity::SensitivitySpec& spec, const queries::QuerySpec& query,
                                const data::Dataset& dataset, const AugLagConfig& cfg,
                                std::optional<double> treatment, std::uint64_t seed) {
  return Trainer(stage1, propensity, spec, query, dataset, cfg, treatment, seed).train();
}

inline nlohmann::json to_json(const TraceRow& r) {
  return {{"outer", r.outer},
          {"mu", r.mu},
          {"mean_lambda", r.mean_lambda},
          {"mean_violation", r.mean_violation},
          {"max_constraint", r.max_constraint},
          {"objective", r.objective},
          {"empty_region_units", r.empty_region_units}};
}

inline nlohmann::json to_json(const Stage2Model& m) {
  nlohmann::json trace = nlohmann::json::array();
  for (const TraceRow& r : m.trace) trace.push_back(to_json(r));
  return {{"format_version", flow::kCheckpointFormatVersion},
          {"kind", "stage2"},
          {"flow", flow::to_json(m.flow)},
          {"sensitivity", sensitivity::to_json(m.spec)},
          {"query", queries::to_json(m.query)},
          {"treatment", m.treatment ? nlohmann::json(*m.treatment) : nlohmann::json()},
          {"feasible", m.feasible},
          {"max_constraint", m.max_constraint},
          {"trace", trace},
          {"seed", m.seed}};
}

inline Stage2Model stage2_from_json(const nlohmann::json& j) {
  require(j.value("format_version", 0) == flow::kCheckpointFormatVersion && j.value("kind", "") == "stage2",
          ErrorCode::invalid_argument, "stage2 checkpoint: wrong kind or format_version");
  Stage2Model m{flow::flow_from_json(j.at("flow")),
                sensitivity::spec_from_json(j.at("sensitivity")),
                queries::query_from_json(j.at("query")),
                j.at("treatment").is_null() ? std::optional<double>() : j.at("treatment").get<double>(),
                j.at("feasible").get<bool>(),
                j.at("max_constraint").get<double>(),
                {},
                j.value("seed", std::uint64_t{0})};
  for (const auto& r : j.at("trace")) {
    m.trace.push_back({r.at("outer").get<int>(), r.at("mu").get<double>(), r.at("mean_lambda").get<double>(),
                       r.at("mean_violation").get<double>(), r.at("max_constraint").get<double>(),
                       r.at("objective").get<double>(), r.at("empty_region_units").get<std::size_t>()});
  }
  return m;
}

}  // namespace ncsa::stage2
