#pragma once

#include "hamh/tensor.hpp"

#include <functional>
#include <vector>

namespace hamh::nn {

// Compares reverse-mode gradients of a deterministic scalar-valued function
// against central finite differences over every coordinate of `params`.
// Returns the maximum over coordinates of
//   |analytic - central| / max(1, |analytic|, |central|).
// The function is evaluated once under a tape for the analytic pass and
// twice per coordinate (tape-free) for the differences. Throws if the
// function produces a non-finite value.
double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                  double h = 1e-5);

}  // namespace hamh::nn
