#include "hamh/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace hamh::nn {

namespace {

double eval_value(const std::function<Tensor()>& f) {
  const double v = f().item();
  if (!std::isfinite(v)) throw std::runtime_error("grad_check: function produced a non-finite value");
  return v;
}

}  // namespace

double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double h) {
  if (h <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

  std::vector<Mat> analytic;
  analytic.reserve(params.size());
  {
    Tape tape;
    for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();
    Tensor loss = f();
    if (!std::isfinite(loss.item()))
      throw std::runtime_error("grad_check: function produced a non-finite value");
    tape.backward(loss);
    for (const Tensor& p : params) analytic.push_back(p.grad());
    for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();
  }

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = const_cast<Tensor&>(params[pi]);
    for (Index r = 0; r < p.rows(); ++r) {
      for (Index c = 0; c < p.cols(); ++c) {
        const double saved = p.value()(r, c);
        p.value()(r, c) = saved + h;
        const double fp = eval_value(f);
        p.value()(r, c) = saved - h;
        const double fm = eval_value(f);
        p.value()(r, c) = saved;
        const double central = (fp - fm) / (2.0 * h);
        const double a = analytic[pi](r, c);
        const double denom = std::max({1.0, std::abs(a), std::abs(central)});
        worst = std::max(worst, std::abs(a - central) / denom);
      }
    }
  }
  return worst;
}

}  // namespace hamh::nn
