#pragma once

// Adam over a flat parameter vector, with optional global-norm clipping.

#include <cmath>
#include <span>
#include <vector>

#include "neuralcsa/error.hpp"

namespace ncsa::optim {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.0;  // 0 disables clipping
};

class Adam {
 public:
  Adam(std::size_t size, AdamConfig config) : config_(config), m_(size, 0.0), v_(size, 0.0) {
    require(config.lr > 0.0, ErrorCode::invalid_argument, "adam: learning rate must be positive");
  }

  /// One descent step on `params` along `grad`.
  void step(std::span<double> params, std::span<const double> grad) {
    require(params.size() == m_.size() && grad.size() == m_.size(), ErrorCode::dimension_mismatch,
            "adam: parameter and gradient sizes differ from optimizer state");
    double scale = 1.0;
    if (config_.clip_norm > 0.0) {
      double sq = 0.0;
      for (double g : grad) sq += g * g;
      const double norm = std::sqrt(sq);
      if (norm > config_.clip_norm) scale = config_.clip_norm / norm;
    }
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grad[i] * scale;
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g * g;
      params[i] -= config_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.epsilon);
    }
  }

  void set_lr(double lr) { config_.lr = lr; }
  [[nodiscard]] long steps() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

}  // namespace ncsa::optim
