#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace dsvb {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Array = Eigen::ArrayXd;

// Dense values are stored flat in row-major order; matrix views are mapped
// on demand for the linear-algebra kernels.
using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatrixRM>;
using ConstMatMap = Eigen::Map<const MatrixRM>;

inline Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Base class for every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error {
  using Error::Error;
};

struct DomainError : Error {
  using Error::Error;
};

struct NonScalarOutput : Error {
  using Error::Error;
};

struct NumericalDivergence : Error {
  using Error::Error;
};

/// Thread-local switch for graph recording. Forward passes that never need
/// gradients (evaluation, detached discriminator inputs) run inside a
/// NoGradGuard so no nodes are recorded.
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set(bool v) { flag() = v; }

 private:
  static bool& flag() {
    thread_local bool enabled_ = true;
    return enabled_;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {

inline std::uint64_t next_tensor_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

/// Storage node. Creation order doubles as a topological order of the
/// recorded graph: an op output is always constructed after its inputs.
struct TensorImpl {
  Shape shape;
  Array values;
  bool requires_grad = false;
  Array grad;  // zero-sized until the backward pass reaches this node
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backprop;

  bool in_graph() const { return requires_grad || static_cast<bool>(backprop); }

  /// Gradient buffer, zero-initialised on first use. Fan-out accumulates.
  Array& ensure_grad() {
    if (grad.size() == 0) grad = Array::Zero(values.size());
    return grad;
  }
};

}  // namespace detail

/// Dense 64-bit float array with reverse-mode gradient tracking. Value
/// semantics over shared storage: copies alias the same node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t = uninitialized(std::move(shape));
    t.impl_->values.setZero();
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    Tensor t = uninitialized(std::move(shape));
    t.impl_->values.setConstant(value);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return full({1}, value, requires_grad);
  }

  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (numel(shape) != static_cast<Index>(values.size()))
      throw ShapeMismatch("from_values: " + shape_str(shape) + " does not hold " +
                          std::to_string(values.size()) + " elements");
    Tensor t = uninitialized(std::move(shape));
    std::copy(values.begin(), values.end(), t.impl_->values.data());
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from_array(Shape shape, Array values, bool requires_grad = false) {
    if (numel(shape) != values.size())
      throw ShapeMismatch("from_array: shape/size mismatch " + shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->shape = std::move(shape);
    t.impl_->values = std::move(values);
    t.impl_->requires_grad = requires_grad;
    t.impl_->id = detail::next_tensor_id();
    return t;
  }

  /// Allocates storage without clearing it; callers must fill every entry.
  static Tensor uninitialized(Shape shape) {
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->values.resize(numel(shape));
    t.impl_->shape = std::move(shape);
    t.impl_->id = detail::next_tensor_id();
    return t;
  }

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const { return impl_->shape; }
  Index size() const { return impl_->values.size(); }
  Index rank() const { return static_cast<Index>(impl_->shape.size()); }

  Index rows() const {
    check_rank2("rows()");
    return impl_->shape[0];
  }
  Index cols() const {
    check_rank2("cols()");
    return impl_->shape[1];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
  }

  Array& values() { return impl_->values; }
  const Array& values() const { return impl_->values; }

  MatMap matrix() {
    check_rank2("matrix()");
    return MatMap(impl_->values.data(), impl_->shape[0], impl_->shape[1]);
  }
  ConstMatMap matrix() const {
    check_rank2("matrix()");
    return ConstMatMap(impl_->values.data(), impl_->shape[0], impl_->shape[1]);
  }

  double operator[](Index i) const { return impl_->values(i); }

  double item() const {
    if (size() != 1) throw NonScalarOutput("item() on tensor of shape " + shape_str(shape()));
    return impl_->values(0);
  }

  bool has_grad() const { return impl_->grad.size() != 0; }
  const Array& grad() const {
    if (!has_grad()) throw Error("grad accessed before backward reached this tensor");
    return impl_->grad;
  }
  void zero_grad() { impl_->grad.resize(0); }

  /// Same values, detached from the graph.
  Tensor detach() const {
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->shape = impl_->shape;
    t.impl_->values = impl_->values;
    t.impl_->id = detail::next_tensor_id();
    return t;
  }

  Tensor clone(bool requires_grad) const {
    Tensor t = detach();
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  std::uint64_t id() const { return impl_->id; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

  bool all_finite() const { return impl_->values.allFinite(); }

  /// Reverse pass from a scalar output. Every reachable leaf with
  /// requires_grad receives d(output)/d(leaf); interior buffers are released
  /// and the recorded graph is consumed as the traversal retires each node.
  void backward() {
    if (!defined()) throw NonScalarOutput("backward() on undefined tensor");
    if (size() != 1)
      throw NonScalarOutput("backward() requires a scalar, got " + shape_str(shape()));

    // The traversal list holds shared ownership: consuming a node's edges
    // below may otherwise destroy parents that are still queued.
    std::vector<std::shared_ptr<detail::TensorImpl>> order;
    std::unordered_set<detail::TensorImpl*> seen;
    std::vector<std::shared_ptr<detail::TensorImpl>> stack{impl_};
    seen.insert(impl_.get());
    while (!stack.empty()) {
      std::shared_ptr<detail::TensorImpl> node = std::move(stack.back());
      stack.pop_back();
      for (const auto& p : node->parents) {
        if (seen.insert(p.get()).second) stack.push_back(p);
      }
      order.push_back(std::move(node));
    }
    // Creation ids give a topological order; walk it newest-first.
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a->id > b->id; });

    impl_->ensure_grad();
    impl_->grad(0) = 1.0;
    for (const auto& node : order) {
      if (!node->backprop) continue;
      if (node->grad.size() != 0) node->backprop(*node);
      node->backprop = nullptr;
      node->parents.clear();
      node->grad.resize(0);
    }
  }

 private:
  void check_rank2(const char* what) const {
    if (rank() != 2) throw ShapeMismatch(std::string(what) + " requires rank 2, got " + shape_str(shape()));
  }

  std::shared_ptr<detail::TensorImpl> impl_;
};

}  // namespace dsvb
