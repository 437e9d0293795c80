#include "hamh/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace hamh::nn {

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, double lr, double max_grad_norm,
                             double beta1, double beta2, double eps)
    : params_(std::move(params)),
      lr_(lr),
      max_grad_norm_(max_grad_norm),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
  if (lr_ <= 0.0) throw std::invalid_argument("AdamOptimizer: learning rate must be positive");
  states_.reserve(params_.size());
  for (const Tensor& p : params_) {
    if (!p.requires_grad())
      throw std::invalid_argument("AdamOptimizer: parameter '" + p.name() +
                                  "' does not require gradients");
    states_.push_back({Mat::Zero(p.rows(), p.cols()), Mat::Zero(p.rows(), p.cols())});
  }
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const Tensor& p : params) {
    if (!p.grad().allFinite())
      throw std::runtime_error("non-finite gradient in parameter '" + p.name() + "'");
    sq += p.grad().squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (const Tensor& p : params) const_cast<Tensor&>(p).grad() *= s;
  }
  return norm;
}

void AdamOptimizer::step() {
  clip_grad_norm(params_, max_grad_norm_);
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    AdamState& s = states_[i];
    const Mat& g = p.grad();
    s.m = beta1_ * s.m + (1.0 - beta1_) * g;
    s.v = beta2_ * s.v.array().matrix() + (1.0 - beta2_) * g.cwiseProduct(g);
    p.value().array() -=
        lr_ * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + eps_);
    p.grad().setZero();
  }
}

void AdamOptimizer::zero_grad() {
  for (Tensor& p : params_) p.grad().setZero();
}

}  // namespace hamh::nn
