#pragma once

// Adam and AdamW (decoupled weight decay) with bias correction.

#include <vector>

#include "redkit/tensor.hpp"

namespace redkit {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // false: classic Adam, decay folded into the gradient (L2).
  // true: AdamW, decay applied directly to the weights.
  bool decoupled_decay = false;
};

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, AdamConfig config);

  // One update over all parameters. Parameters without an accumulated
  // gradient are treated as having zero gradient. Throws TrainingAbort on
  // any non-finite gradient.
  void step();
  void zero_grad();

  int step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  AdamConfig config_;
  int step_count_ = 0;
};

}  // namespace redkit
