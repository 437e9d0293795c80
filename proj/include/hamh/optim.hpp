#pragma once

#include "hamh/tensor.hpp"

#include <vector>

namespace hamh::nn {

struct AdamState {
  Mat m;  // first moment
  Mat v;  // second moment
};

// Bias-corrected Adam over a fixed parameter group. Each step clips the
// group's gradients by global norm, applies the update, and zeroes the
// gradients. The step counter increments exactly once per step() call.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, double lr, double max_grad_norm = 10.0,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step();
  void zero_grad();

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long step_count() const { return t_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<AdamState> states_;
  double lr_;
  double max_grad_norm_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

// Scales gradients so their joint L2 norm does not exceed max_norm.
// Returns the pre-clip norm. Throws on non-finite gradients, naming the
// offending parameter.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

}  // namespace hamh::nn
