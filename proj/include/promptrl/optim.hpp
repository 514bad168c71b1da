// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "promptrl/autograd.hpp"

namespace promptrl {

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 1.0;  // global L2 norm cap; <=0 disables clipping
};

// Adam over a fixed parameter list. Non-trainable parameters are skipped
// entirely so a frozen model can share the same step path.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Parameter*> params, AdamConfig cfg);

  // Applies one update from the accumulated gradients, then zeroes them.
  void step();
  void zero_grad();

  int64_t step_count() const { return t_; }
  // Global gradient norm observed by the most recent step().
  double last_grad_norm() const { return last_norm_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  int64_t t_ = 0;
  double last_norm_ = 0.0;
};

}  // namespace promptrl
