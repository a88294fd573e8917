#include "haven/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace haven {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<detail::Node>;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " +
                   to_string(b));
}

void require_rank2(const char* op, const Tensor& t) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
  if (t.shape().size() != 2) throw ShapeError(std::string(op) + ": expected rank 2, got " +
                                              to_string(t.shape()));
}

Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> value,
                   std::vector<NodePtr> parents, std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = {rows, cols};
  node->value = std::move(value);
  node->leaf = false;
  bool track = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) track = track || p->requires_grad;
  }
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

ConstMap cmap(const detail::Node& n) {
  return ConstMap(n.value.data(), static_cast<Eigen::Index>(n.shape[0]),
                  static_cast<Eigen::Index>(n.shape[1]));
}

// Elementwise unary op with derivative given as f'(x, y).
template <class F, class D>
Tensor unary(const Tensor& a, const char* name, F f, D df) {
  require_rank2(name, a);
  const auto& in = a.node()->value;
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result(a.rows(), a.cols(), std::move(out), {a.node()}, [df](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(p.value[i], self.value[i]);
  });
}

// Broadcast rule shared by add/sub/mul: equal shapes, or b is (1, cols).
bool row_broadcast(const char* op, const Tensor& a, const Tensor& b) {
  require_rank2(op, a);
  require_rank2(op, b);
  if (a.shape() == b.shape()) return false;
  if (b.rows() == 1 && b.cols() == a.cols()) return true;
  shape_fail(op, a.shape(), b.shape());
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  const std::size_t n =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  if (n != values.size()) {
    throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                     to_string(shape));
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return Tensor({rows, cols}, std::vector<double>(rows * cols, 0.0), requires_grad);
}

Tensor Tensor::filled(std::size_t rows, std::size_t cols, double value) {
  return Tensor({rows, cols}, std::vector<double>(rows * cols, value));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1, 1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const double> Tensor::values() const { return node_->value; }

std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + to_string(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() { return node_->grad_buffer(); }

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + to_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (auto* n : order) {
    if (!n->leaf) n->grad.assign(n->value.size(), 0.0);
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->leaf && (*it)->backward) (*it)->backward(**it);
  }
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->value, false); }

Tensor Tensor::clone() const { return Tensor(node_->shape, node_->value, node_->requires_grad); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  if (a.cols() != b.rows()) shape_fail("matmul", a.shape(), b.shape());
  const std::size_t m = a.rows(), n = b.cols();
  std::vector<double> out(m * n);
  Map(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)).noalias() = cmap(*a.node()) * cmap(*b.node());
  return make_result(m, n, std::move(out), {a.node(), b.node()}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    ConstMap g(self.grad.data(), static_cast<Eigen::Index>(self.shape[0]),
               static_cast<Eigen::Index>(self.shape[1]));
    if (pa.requires_grad) {
      Map(pa.grad_buffer().data(), static_cast<Eigen::Index>(pa.shape[0]),
          static_cast<Eigen::Index>(pa.shape[1])).noalias() += g * cmap(pb).transpose();
    }
    if (pb.requires_grad) {
      Map(pb.grad_buffer().data(), static_cast<Eigen::Index>(pb.shape[0]),
          static_cast<Eigen::Index>(pb.shape[1])).noalias() += cmap(pa).transpose() * g;
    }
  });
}

namespace {

template <class F, class DA, class DB>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  const bool bc = row_broadcast(name, a, b);
  const std::size_t rows = a.rows(), cols = a.cols();
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      out[i] = f(av[i], bv[bc ? c : i]);
    }
  }
  return make_result(rows, cols, std::move(out), {a.node(), b.node()},
                     [bc, rows, cols, da, db](detail::Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       if (pa.requires_grad) {
                         auto& g = pa.grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           g[i] += self.grad[i] * da(pa.value[i], pb.value[bc ? i % cols : i]);
                         }
                       }
                       if (pb.requires_grad) {
                         auto& g = pb.grad_buffer();
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t c = 0; c < cols; ++c) {
                             const std::size_t i = r * cols + c;
                             const std::size_t j = bc ? c : i;
                             g[j] += self.grad[i] * db(pa.value[i], pb.value[j]);
                           }
                         }
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      a, "add_scalar", [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor elu(const Tensor& a, double alpha) {
  return unary(
      a, "elu", [alpha](double x) { return x > 0.0 ? x : alpha * std::expm1(x); },
      [alpha](double x, double y) { return x > 0.0 ? 1.0 : y + alpha; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, "abs", [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor sum(const Tensor& a, int axis) {
  require_rank2("sum", a);
  if (axis != 0 && axis != 1) throw ShapeError("sum: axis must be 0 or 1");
  const std::size_t rows = a.rows(), cols = a.cols();
  const auto& v = a.node()->value;
  const std::size_t out_rows = axis == 0 ? 1 : rows;
  const std::size_t out_cols = axis == 0 ? cols : 1;
  std::vector<double> out(out_rows * out_cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[axis == 0 ? c : r] += v[r * cols + c];
  }
  return make_result(out_rows, out_cols, std::move(out), {a.node()},
                     [axis, rows, cols](detail::Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t c = 0; c < cols; ++c) {
                           g[r * cols + c] += self.grad[axis == 0 ? c : r];
                         }
                       }
                     });
}

Tensor mean(const Tensor& a, int axis) {
  require_rank2("mean", a);
  const std::size_t n = axis == 0 ? a.rows() : a.cols();
  return scale(sum(a, axis), 1.0 / static_cast<double>(n));
}

Tensor sum_all(const Tensor& a) {
  require_rank2("sum_all", a);
  double total = 0.0;
  for (double x : a.values()) total += x;
  return make_result(1, 1, {total}, {a.node()}, [](detail::Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (double& x : g) x += self.grad[0];
  });
}

Tensor mean_all(const Tensor& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor max_last(const Tensor& a) {
  require_rank2("max_last", a);
  const std::size_t rows = a.rows(), cols = a.cols();
  if (cols == 0) throw ShapeError("max_last: empty last axis");
  const auto& v = a.node()->value;
  std::vector<double> out(rows);
  std::vector<std::size_t> arg(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (v[r * cols + c] > v[r * cols + best]) best = c;
    }
    arg[r] = best;
    out[r] = v[r * cols + best];
  }
  return make_result(rows, 1, std::move(out), {a.node()},
                     [arg = std::move(arg), cols](detail::Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       for (std::size_t r = 0; r < arg.size(); ++r) g[r * cols + arg[r]] += self.grad[r];
                     });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> offsets;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    require_rank2("concat", p);
    if (p.rows() != rows) shape_fail("concat", parts[0].shape(), p.shape());
    offsets.push_back(cols);
    cols += p.cols();
    parents.push_back(p.node());
  }
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& v = parts[i].node()->value;
    const std::size_t pc = parts[i].cols();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r * pc), pc,
                  out.begin() + static_cast<std::ptrdiff_t>(r * cols + offsets[i]));
    }
  }
  return make_result(rows, cols, std::move(out), std::move(parents),
                     [offsets = std::move(offsets), rows, cols](detail::Node& self) {
                       for (std::size_t i = 0; i < self.parents.size(); ++i) {
                         auto& p = *self.parents[i];
                         if (!p.requires_grad) continue;
                         auto& g = p.grad_buffer();
                         const std::size_t pc = p.shape[1];
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t c = 0; c < pc; ++c) {
                             g[r * pc + c] += self.grad[r * cols + offsets[i] + c];
                           }
                         }
                       }
                     });
}

Tensor concat(std::initializer_list<Tensor> parts) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<NodePtr> parents;
  std::vector<double> out;
  for (const auto& p : parts) {
    require_rank2("concat_rows", p);
    if (p.cols() != cols) shape_fail("concat_rows", parts[0].shape(), p.shape());
    rows += p.rows();
    parents.push_back(p.node());
  }
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_result(rows, cols, std::move(out), std::move(parents), [](detail::Node& self) {
    std::size_t offset = 0;
    for (auto& pp : self.parents) {
      auto& p = *pp;
      const std::size_t n = p.value.size();
      if (p.requires_grad) {
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank2("slice_cols", a);
  if (begin + count > a.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for shape " +
                     to_string(a.shape()));
  }
  const std::size_t rows = a.rows(), cols = a.cols();
  const auto& v = a.node()->value;
  std::vector<double> out(rows * count);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r * cols + begin), count,
                out.begin() + static_cast<std::ptrdiff_t>(r * count));
  }
  return make_result(rows, count, std::move(out), {a.node()},
                     [rows, cols, begin, count](detail::Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t c = 0; c < count; ++c) {
                           g[r * cols + begin + c] += self.grad[r * count + c];
                         }
                       }
                     });
}

Tensor gather(const Tensor& a, std::span<const std::size_t> index) {
  require_rank2("gather", a);
  if (index.size() != a.rows()) {
    shape_fail("gather", a.shape(), Shape{index.size()});
  }
  const std::size_t cols = a.cols();
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> out(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= cols) {
      throw ShapeError("gather: index " + std::to_string(idx[r]) + " out of range for shape " +
                       to_string(a.shape()));
    }
    out[r] = a.node()->value[r * cols + idx[r]];
  }
  const std::size_t rows = idx.size();
  return make_result(rows, 1, std::move(out), {a.node()},
                     [idx = std::move(idx), cols](detail::Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       for (std::size_t r = 0; r < idx.size(); ++r) g[r * cols + idx[r]] += self.grad[r];
                     });
}

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
  require_rank2("reshape", a);
  if (rows * cols != a.numel()) shape_fail("reshape", a.shape(), Shape{rows, cols});
  return make_result(rows, cols, a.node()->value, {a.node()}, [](detail::Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor batched_vecmat(const Tensor& v, const Tensor& w) {
  require_rank2("batched_vecmat", v);
  require_rank2("batched_vecmat", w);
  const std::size_t batch = v.rows(), n = v.cols();
  if (w.rows() != batch || n == 0 || w.cols() % n != 0) {
    shape_fail("batched_vecmat", v.shape(), w.shape());
  }
  const std::size_t e = w.cols() / n;
  const auto& vv = v.node()->value;
  const auto& wv = w.node()->value;
  std::vector<double> out(batch * e, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < n; ++j) {
      const double s = vv[b * n + j];
      const double* wr = &wv[b * n * e + j * e];
      double* o = &out[b * e];
      for (std::size_t k = 0; k < e; ++k) o[k] += s * wr[k];
    }
  }
  return make_result(batch, e, std::move(out), {v.node(), w.node()},
                     [batch, n, e](detail::Node& self) {
                       auto& pv = *self.parents[0];
                       auto& pw = *self.parents[1];
                       for (std::size_t b = 0; b < batch; ++b) {
                         const double* g = &self.grad[b * e];
                         for (std::size_t j = 0; j < n; ++j) {
                           if (pv.requires_grad) {
                             double acc = 0.0;
                             const double* wr = &pw.value[b * n * e + j * e];
                             for (std::size_t k = 0; k < e; ++k) acc += g[k] * wr[k];
                             pv.grad_buffer()[b * n + j] += acc;
                           }
                           if (pw.requires_grad) {
                             const double s = pv.value[b * n + j];
                             double* gw = &pw.grad_buffer()[b * n * e + j * e];
                             for (std::size_t k = 0; k < e; ++k) gw[k] += s * g[k];
                           }
                         }
                       }
                     });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_rank2("mse", a);
  require_rank2("mse", b);
  if (a.shape() != b.shape()) shape_fail("mse", a.shape(), b.shape());
  const auto d = sub(a, b);
  return mean_all(mul(d, d));
}

Tensor masked_mse(const Tensor& a, const Tensor& b, const Tensor& mask) {
  require_rank2("masked_mse", a);
  if (a.shape() != b.shape()) shape_fail("masked_mse", a.shape(), b.shape());
  if (a.shape() != mask.shape()) shape_fail("masked_mse", a.shape(), mask.shape());
  double count = 0.0;
  for (double m : mask.values()) count += m;
  const auto d = mul(sub(a, b), mask.detach());
  return scale(sum_all(mul(d, d)), 1.0 / std::max(1.0, count));
}

}  // namespace haven
