#include "haven/optim.hpp"

#include <cmath>

namespace haven {

double global_grad_norm(std::span<const Tensor> params) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (!std::isfinite(norm)) throw DivergenceError("gradient norm is not finite");
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

RmsProp::RmsProp(std::vector<Tensor> params, RmsPropOptions options)
    : params_(std::move(params)), options_(options) {
  accumulators_.reserve(params_.size());
  for (const auto& p : params_) accumulators_.emplace_back(p.numel(), 0.0);
}

double RmsProp::step(double clip_norm) {
  const double norm = clip_grad_norm(params_, clip_norm);
  const double a = options_.smoothing;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& acc = accumulators_[i];
    auto values = params_[i].mutable_values();
    if (!params_[i].has_grad()) {
      for (double& v : acc) v *= a;
      continue;
    }
    auto grad = params_[i].grad();
    for (std::size_t j = 0; j < acc.size(); ++j) {
      const double g = grad[j];
      acc[j] = a * acc[j] + (1.0 - a) * g * g;
      values[j] -= options_.learning_rate * g / std::sqrt(acc[j] + options_.epsilon);
    }
  }
  zero_grad();
  return norm;
}

void RmsProp::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace haven
