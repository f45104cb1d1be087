#include "redkit/optimizer.hpp"

#include <cmath>
#include <string>

namespace redkit {

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  first_moment_.reserve(params_.size());
  second_moment_.reserve(params_.size());
  for (const auto& p : params_) {
    first_moment_.emplace_back(p.numel(), 0.0);
    second_moment_.emplace_back(p.numel(), 0.0);
  }
}

void AdamOptimizer::step() {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, step_count_);
  const double bc2 = 1.0 - std::pow(config_.beta2, step_count_);
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    const double* g = p.grad_data();
    auto& m = first_moment_[pi];
    auto& v = second_moment_[pi];
    double* w = p.data();
    const std::size_t n = p.numel();
    for (std::size_t i = 0; i < n; ++i) {
      double gi = g ? g[i] : 0.0;
      if (!std::isfinite(gi)) {
        throw TrainingAbort("non-finite gradient in parameter " +
                            std::to_string(pi) + " at index " +
                            std::to_string(i));
      }
      if (config_.weight_decay != 0.0 && !config_.decoupled_decay) {
        gi += config_.weight_decay * w[i];
      }
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      if (config_.weight_decay != 0.0 && config_.decoupled_decay) {
        w[i] -= config_.lr * config_.weight_decay * w[i];
      }
      w[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace redkit
