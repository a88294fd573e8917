#pragma once

// Dense 2-D tensors with reverse-mode automatic differentiation.
//
// Every tensor is a (rows, cols) matrix of doubles in row-major order.
// Scalars are (1, 1). Broadcasting exists only along the leading (row)
// dimension: a (1, cols) operand is repeated over every row of the other.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace haven {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this node's grad into the parents' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor filled(std::size_t rows, std::size_t cols, double value);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rows() const { return shape()[0]; }
  std::size_t cols() const { return shape()[1]; }
  std::size_t numel() const;

  std::span<const double> values() const;
  // Writable view of a leaf's storage (parameters, inputs).
  std::span<double> mutable_values();
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Accumulates d(this)/d(leaf) into every gradient-tracking leaf reachable
  // from this scalar.
  void backward() const;

  // Value copy with no history.
  Tensor detach() const;
  // Deep copy of values and requires_grad flag; history is dropped.
  Tensor clone() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
  std::shared_ptr<detail::Node> node_;
};

// Graph recording is disabled while a guard is alive on the current thread.
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool previous_;
};

bool grad_enabled();

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Forward ops. Shape mismatches throw ShapeError naming both shapes.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor relu(const Tensor& a);
Tensor elu(const Tensor& a, double alpha = 1.0);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// d|x|/dx at x = 0 is taken as 0.
Tensor abs(const Tensor& a);
// axis 0 reduces rows -> (1, cols); axis 1 reduces columns -> (rows, 1).
Tensor sum(const Tensor& a, int axis);
Tensor mean(const Tensor& a, int axis);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
// Per-row maximum -> (rows, 1); gradient flows to the lowest-index maximiser.
Tensor max_last(const Tensor& a);
Tensor concat(std::span<const Tensor> parts);
Tensor concat(std::initializer_list<Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
// Picks a[r, index[r]] for every row -> (rows, 1).
Tensor gather(const Tensor& a, std::span<const std::size_t> index);
Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);
// Row-wise vector-matrix product: out[b, e] = sum_j v[b, j] * w[b, j * E + e].
Tensor batched_vecmat(const Tensor& v, const Tensor& w);
// Mean of (a - b)^2 over all entries.
Tensor mse(const Tensor& a, const Tensor& b);
// sum(mask * (a - b)^2) / max(1, sum(mask)); mask is constant.
Tensor masked_mse(const Tensor& a, const Tensor& b, const Tensor& mask);

}  // namespace haven
