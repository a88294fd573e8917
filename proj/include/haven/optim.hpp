#pragma once

#include "haven/tensor.hpp"

#include <stdexcept>
#include <vector>

namespace haven {

// A non-finite gradient reached the optimizer.
class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct RmsPropOptions {
  double learning_rate = 0.0005;
  double smoothing = 0.99;
  double epsilon = 1e-5;
};

// Global L2 norm over the gradients of all tensors; tensors without a
// gradient buffer count as zero.
double global_grad_norm(std::span<const Tensor> params);

// Scales all gradients by max_norm / norm when norm exceeds max_norm.
// Returns the norm before scaling.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

// RMSProp with the squared-gradient average inside the square root:
//   acc <- a * acc + (1 - a) * g^2
//   p   <- p - lr * g / sqrt(acc + eps)
class RmsProp {
public:
  RmsProp(std::vector<Tensor> params, RmsPropOptions options = {});

  // Clips (when clip_norm > 0), applies one update and clears gradients.
  // Returns the pre-clip gradient norm. Throws DivergenceError on NaN/inf.
  double step(double clip_norm);
  void zero_grad();

  const RmsPropOptions& options() const { return options_; }
  const std::vector<std::vector<double>>& accumulators() const { return accumulators_; }
  std::span<const Tensor> parameters() const { return params_; }

private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> accumulators_;
  RmsPropOptions options_;
};

}  // namespace haven
