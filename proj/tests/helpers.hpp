#pragma once

// Shared test utilities: finite-difference gradient checking and small
// random-input generators.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "redkit/tensor.hpp"

namespace testutil {

// Central finite differences of a scalar-valued function with respect to
// the entries of `param`, compared against the analytic gradient obtained
// from one taped backward pass. Returns the worst relative error.
//
// `forward` must rebuild the computation from scratch on every call so the
// perturbed values are picked up.
inline double gradcheck(redkit::Tensor& param,
                        const std::function<redkit::Tensor()>& forward,
                        double step = 1e-5) {
  double analytic_loss = 0.0;
  std::vector<double> analytic(param.numel(), 0.0);
  param.zero_grad();  // discard anything accumulated by earlier checks
  {
    redkit::Tape tape;
    redkit::Tensor loss = forward();
    analytic_loss = loss.scalar_value();
    tape.backward(loss);
    const double* g = param.grad_data();
    for (std::size_t i = 0; i < param.numel(); ++i) analytic[i] = g ? g[i] : 0.0;
    param.zero_grad();
  }
  (void)analytic_loss;
  double worst = 0.0;
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double orig = param.data()[i];
    param.data()[i] = orig + step;
    double up;
    {
      redkit::NoGradGuard ng;
      up = forward().scalar_value();
    }
    param.data()[i] = orig - step;
    double down;
    {
      redkit::NoGradGuard ng;
      down = forward().scalar_value();
    }
    param.data()[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double denom =
        std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
  }
  return worst;
}

inline redkit::Tensor random_tensor(std::vector<int> shape,
                                    std::mt19937_64& rng, double scale = 1.0) {
  return redkit::Tensor::randn(std::move(shape), rng, scale);
}

}  // namespace testutil
