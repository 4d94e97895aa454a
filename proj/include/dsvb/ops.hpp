#pragma once

#include <cmath>
#include <initializer_list>

#include "dsvb/tensor.hpp"

namespace dsvb {

namespace detail {

inline bool track(std::initializer_list<const Tensor*> inputs) {
  if (!GradMode::enabled()) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->impl()->in_graph()) return true;
  return false;
}

inline void record(Tensor& out, std::vector<std::shared_ptr<TensorImpl>> parents,
                   std::function<void(TensorImpl&)> backprop) {
  out.impl()->parents = std::move(parents);
  out.impl()->backprop = std::move(backprop);
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeMismatch(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// True when `small` broadcasts across the rows of rank-2 `big`: either a
// rank-1 vector of length cols or a 1-by-cols matrix.
inline bool row_broadcastable(const Tensor& big, const Tensor& small) {
  if (big.rank() != 2) return false;
  if (small.rank() == 1) return small.size() == big.cols();
  if (small.rank() == 2) return small.rows() == 1 && small.cols() == big.cols();
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeMismatch("matmul requires rank-2 inputs, got " + shape_str(a.shape()) + " and " +
                        shape_str(b.shape()));
  if (a.cols() != b.rows())
    throw ShapeMismatch("matmul: inner dimensions " + shape_str(a.shape()) + " * " +
                        shape_str(b.shape()));
  const Index m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::uninitialized({m, n});
  MatMap(out.values().data(), m, n).noalias() = a.matrix() * b.matrix();
  if (detail::track({&a, &b})) {
    auto ai = a.impl();
    auto bi = b.impl();
    detail::record(out, {ai, bi}, [ai, bi, m, k, n](detail::TensorImpl& self) {
      ConstMatMap g(self.grad.data(), m, n);
      if (ai->in_graph()) {
        MatMap(ai->ensure_grad().data(), m, k).noalias() +=
            g * ConstMatMap(bi->values.data(), k, n).transpose();
      }
      if (bi->in_graph()) {
        MatMap(bi->ensure_grad().data(), k, n).noalias() +=
            ConstMatMap(ai->values.data(), m, k).transpose() * g;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise binary ops (with scalar and bias-row broadcasting)
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  // Same-shape fast path.
  if (a.shape() == b.shape()) {
    Tensor out = Tensor::uninitialized(a.shape());
    out.values() = a.values() + b.values();
    if (detail::track({&a, &b})) {
      auto ai = a.impl();
      auto bi = b.impl();
      detail::record(out, {ai, bi}, [ai, bi](detail::TensorImpl& self) {
        if (ai->in_graph()) ai->ensure_grad() += self.grad;
        if (bi->in_graph()) bi->ensure_grad() += self.grad;
      });
    }
    return out;
  }
  if (b.size() == 1 || a.size() == 1) {
    const Tensor& big = a.size() == 1 ? b : a;
    const Tensor& small = a.size() == 1 ? a : b;
    Tensor out = Tensor::uninitialized(big.shape());
    out.values() = big.values() + small.values()(0);
    if (detail::track({&a, &b})) {
      auto bigi = big.impl();
      auto smalli = small.impl();
      detail::record(out, {bigi, smalli}, [bigi, smalli](detail::TensorImpl& self) {
        if (bigi->in_graph()) bigi->ensure_grad() += self.grad;
        if (smalli->in_graph()) smalli->ensure_grad()(0) += self.grad.sum();
      });
    }
    return out;
  }
  const bool b_row = detail::row_broadcastable(a, b);
  const bool a_row = detail::row_broadcastable(b, a);
  if (!b_row && !a_row)
    throw ShapeMismatch("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const Tensor& big = b_row ? a : b;
  const Tensor& row = b_row ? b : a;
  const Index m = big.rows(), n = big.cols();
  Tensor out = Tensor::uninitialized(big.shape());
  MatMap(out.values().data(), m, n) =
      big.matrix().rowwise() + Eigen::Map<const Eigen::RowVectorXd>(row.values().data(), n);
  if (detail::track({&a, &b})) {
    auto bigi = big.impl();
    auto rowi = row.impl();
    detail::record(out, {bigi, rowi}, [bigi, rowi, m, n](detail::TensorImpl& self) {
      if (bigi->in_graph()) bigi->ensure_grad() += self.grad;
      if (rowi->in_graph()) {
        Eigen::Map<Eigen::RowVectorXd>(rowi->ensure_grad().data(), n) +=
            ConstMatMap(self.grad.data(), m, n).colwise().sum();
      }
    });
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    Tensor out = Tensor::uninitialized(a.shape());
    out.values() = a.values() * b.values();
    if (detail::track({&a, &b})) {
      auto ai = a.impl();
      auto bi = b.impl();
      detail::record(out, {ai, bi}, [ai, bi](detail::TensorImpl& self) {
        if (ai->in_graph()) ai->ensure_grad() += self.grad * bi->values;
        if (bi->in_graph()) bi->ensure_grad() += self.grad * ai->values;
      });
    }
    return out;
  }
  if (b.size() == 1 || a.size() == 1) {
    const Tensor& big = a.size() == 1 ? b : a;
    const Tensor& small = a.size() == 1 ? a : b;
    Tensor out = Tensor::uninitialized(big.shape());
    out.values() = big.values() * small.values()(0);
    if (detail::track({&a, &b})) {
      auto bigi = big.impl();
      auto smalli = small.impl();
      detail::record(out, {bigi, smalli}, [bigi, smalli](detail::TensorImpl& self) {
        if (bigi->in_graph()) bigi->ensure_grad() += self.grad * smalli->values(0);
        if (smalli->in_graph()) smalli->ensure_grad()(0) += (self.grad * bigi->values).sum();
      });
    }
    return out;
  }
  throw ShapeMismatch("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor out = Tensor::uninitialized(a.shape());
  out.values() = a.values() - b.values();
  if (detail::track({&a, &b})) {
    auto ai = a.impl();
    auto bi = b.impl();
    detail::record(out, {ai, bi}, [ai, bi](detail::TensorImpl& self) {
      if (ai->in_graph()) ai->ensure_grad() += self.grad;
      if (bi->in_graph()) bi->ensure_grad() -= self.grad;
    });
  }
  return out;
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "div");
  if ((b.values() == 0.0).any()) throw DomainError("div: zero divisor entry");
  Tensor out = Tensor::uninitialized(a.shape());
  out.values() = a.values() / b.values();
  if (detail::track({&a, &b})) {
    auto ai = a.impl();
    auto bi = b.impl();
    detail::record(out, {ai, bi}, [ai, bi](detail::TensorImpl& self) {
      if (ai->in_graph()) ai->ensure_grad() += self.grad / bi->values;
      if (bi->in_graph())
        bi->ensure_grad() -= self.grad * ai->values / (bi->values * bi->values);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scalar (double) arithmetic
// ---------------------------------------------------------------------------

inline Tensor scale(const Tensor& a, double s) {
  Tensor out = Tensor::uninitialized(a.shape());
  out.values() = a.values() * s;
  if (detail::track({&a})) {
    auto ai = a.impl();
    detail::record(out, {ai}, [ai, s](detail::TensorImpl& self) {
      if (ai->in_graph()) ai->ensure_grad() += self.grad * s;
    });
  }
  return out;
}

inline Tensor add_scalar(const Tensor& a, double s) {
  Tensor out = Tensor::uninitialized(a.shape());
  out.values() = a.values() + s;
  if (detail::track({&a})) {
    auto ai = a.impl();
    detail::record(out, {ai}, [ai](detail::TensorImpl& self) {
      if (ai->in_graph()) ai->ensure_grad() += self.grad;
    });
  }
  return out;
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

/// 1 - a, the usual gate complement.
inline Tensor one_minus(const Tensor& a) { return add_scalar(scale(a, -1.0), 1.0); }

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

inline Tensor exp(const Tensor& a) {
  Tensor out = Tensor::uninitialized(a.shape());
  out.values() = a.values().exp();
  if (detail::track({&a})) {
    auto ai = a.impl();
    detail::record(out, {ai}, [ai](detail::TensorImpl& self) {
      if (ai->in_graph()) ai->ensure_grad() += self.grad * self.values;
    });
  }
  return out;
}

inline Tensor log(const Tensor& a) {
  if ((a.values() <= 0.0).any()) throw DomainError("log: non-positive input entry");
  Tensor out = Tensor::uninitialized(a.shape());
  out.values() = a.values().log();
  if (detail::track({&a})) {
    auto ai = a.impl();
    detail::record(out, {ai}, [ai](detail::TensorImpl& self) {
      if (ai->in_graph()) ai->ensure_grad() += self.grad / ai->values;
    });
  }
  return out;
}

inline Tensor tanh(const Tensor& a) {
  Tensor out = Tensor::uninitialized(a.shape());
  out.values() = a.values().tanh();
  if (detail::track({&a})) {
    auto ai = a.impl();
    detail::record(out, {ai}, [ai](detail::TensorImpl& self) {
      if (ai->in_graph()) ai->ensure_grad() += self.grad * (1.0 - self.values.square());
    });
  }
  return out;
}

namespace detail {
inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace detail

inline Tensor sigmoid(const Tensor& a) {
  Tensor out = Tensor::uninitialized(a.shape());
  out.values() = a.values().unaryExpr([](double x) { return detail::sigmoid_scalar(x); });
  if (detail::track({&a})) {
    auto ai = a.impl();
    detail::record(out, {ai}, [ai](detail::TensorImpl& self) {
      if (ai->in_graph()) ai->ensure_grad() += self.grad * self.values * (1.0 - self.values);
    });
  }
  return out;
}

/// ln(1 + e^x); inputs above 30 fall through to the identity to avoid
/// overflow in the exponential.
inline Tensor softplus(const Tensor& a) {
  Tensor out = Tensor::uninitialized(a.shape());
  out.values() = a.values().unaryExpr(
      [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); });
  if (detail::track({&a})) {
    auto ai = a.impl();
    detail::record(out, {ai}, [ai](detail::TensorImpl& self) {
      if (ai->in_graph())
        ai->ensure_grad() +=
            self.grad * ai->values.unaryExpr([](double x) { return detail::sigmoid_scalar(x); });
    });
  }
  return out;
}

inline Tensor square(const Tensor& a) {
  Tensor out = Tensor::uninitialized(a.shape());
  out.values() = a.values().square();
  if (detail::track({&a})) {
    auto ai = a.impl();
    detail::record(out, {ai}, [ai](detail::TensorImpl& self) {
      if (ai->in_graph()) ai->ensure_grad() += self.grad * 2.0 * ai->values;
    });
  }
  return out;
}

/// Elementwise clamp; gradient passes only through entries strictly inside
/// the interval.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  Tensor out = Tensor::uninitialized(a.shape());
  out.values() = a.values().max(lo).min(hi);
  if (detail::track({&a})) {
    auto ai = a.impl();
    detail::record(out, {ai}, [ai, lo, hi](detail::TensorImpl& self) {
      if (ai->in_graph())
        ai->ensure_grad() +=
            self.grad * ((ai->values > lo) && (ai->values < hi)).cast<double>();
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows())
    throw ShapeMismatch("concat_cols: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const Index m = a.rows(), ca = a.cols(), cb = b.cols();
  Tensor out = Tensor::uninitialized({m, ca + cb});
  MatMap om(out.values().data(), m, ca + cb);
  om.leftCols(ca) = a.matrix();
  om.rightCols(cb) = b.matrix();
  if (detail::track({&a, &b})) {
    auto ai = a.impl();
    auto bi = b.impl();
    detail::record(out, {ai, bi}, [ai, bi, m, ca, cb](detail::TensorImpl& self) {
      ConstMatMap g(self.grad.data(), m, ca + cb);
      if (ai->in_graph()) MatMap(ai->ensure_grad().data(), m, ca) += g.leftCols(ca);
      if (bi->in_graph()) MatMap(bi->ensure_grad().data(), m, cb) += g.rightCols(cb);
    });
  }
  return out;
}

inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols())
    throw ShapeMismatch("concat_rows: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const Index ra = a.rows(), rb = b.rows(), n = a.cols();
  Tensor out = Tensor::uninitialized({ra + rb, n});
  MatMap om(out.values().data(), ra + rb, n);
  om.topRows(ra) = a.matrix();
  om.bottomRows(rb) = b.matrix();
  if (detail::track({&a, &b})) {
    auto ai = a.impl();
    auto bi = b.impl();
    detail::record(out, {ai, bi}, [ai, bi, ra, rb, n](detail::TensorImpl& self) {
      ConstMatMap g(self.grad.data(), ra + rb, n);
      if (ai->in_graph()) MatMap(ai->ensure_grad().data(), ra, n) += g.topRows(ra);
      if (bi->in_graph()) MatMap(bi->ensure_grad().data(), rb, n) += g.bottomRows(rb);
    });
  }
  return out;
}

inline Tensor slice_cols(const Tensor& a, Index start, Index count) {
  if (a.rank() != 2 || start < 0 || count < 0 || start + count > a.cols())
    throw ShapeMismatch("slice_cols [" + std::to_string(start) + ", +" + std::to_string(count) +
                        ") of " + shape_str(a.shape()));
  const Index m = a.rows(), n = a.cols();
  Tensor out = Tensor::uninitialized({m, count});
  MatMap(out.values().data(), m, count) = a.matrix().middleCols(start, count);
  if (detail::track({&a})) {
    auto ai = a.impl();
    detail::record(out, {ai}, [ai, m, n, start, count](detail::TensorImpl& self) {
      if (ai->in_graph())
        MatMap(ai->ensure_grad().data(), m, n).middleCols(start, count) +=
            ConstMatMap(self.grad.data(), m, count);
    });
  }
  return out;
}

inline Tensor slice_rows(const Tensor& a, Index start, Index count) {
  if (a.rank() != 2 || start < 0 || count < 0 || start + count > a.rows())
    throw ShapeMismatch("slice_rows [" + std::to_string(start) + ", +" + std::to_string(count) +
                        ") of " + shape_str(a.shape()));
  const Index m = a.rows(), n = a.cols();
  Tensor out = Tensor::uninitialized({count, n});
  MatMap(out.values().data(), count, n) = a.matrix().middleRows(start, count);
  if (detail::track({&a})) {
    auto ai = a.impl();
    detail::record(out, {ai}, [ai, m, n, start, count](detail::TensorImpl& self) {
      if (ai->in_graph())
        MatMap(ai->ensure_grad().data(), m, n).middleRows(start, count) +=
            ConstMatMap(self.grad.data(), count, n);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
  Tensor out = Tensor::scalar(a.values().sum());
  if (detail::track({&a})) {
    auto ai = a.impl();
    detail::record(out, {ai}, [ai](detail::TensorImpl& self) {
      if (ai->in_graph()) ai->ensure_grad() += self.grad(0);
    });
  }
  return out;
}

inline Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  Tensor out = Tensor::scalar(a.values().sum() * inv);
  if (detail::track({&a})) {
    auto ai = a.impl();
    detail::record(out, {ai}, [ai, inv](detail::TensorImpl& self) {
      if (ai->in_graph()) ai->ensure_grad() += self.grad(0) * inv;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Operator sugar
// ---------------------------------------------------------------------------

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace dsvb
