/*
 * Copyright 2026 The lcpseq Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Reverse-mode differentiation over a closed set of dense primitives.
//
// Tensors are 2-D (rows = batch, cols = features). Elementwise primitives
// broadcast only a single-row operand over the batch extent. A Tape records
// every primitive whose inputs require gradients, in execution order, and
// replays them backwards exactly once per backward() call.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lcpseq/errors.hpp"

namespace lcpseq::ad {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

enum class Primitive {
  kMatmul,
  kAdd,
  kMul,
  kConcat,
  kSlice,
  kSigmoid,
  kTanh,
  kRelu,
  kSum,
  kMean,
  kSquare,
  kLog,
  kExp,
  kRsqrt,
};

inline const char* primitive_name(Primitive p) {
  switch (p) {
    case Primitive::kMatmul: return "matmul";
    case Primitive::kAdd: return "add";
    case Primitive::kMul: return "elementwise_mul";
    case Primitive::kConcat: return "concat";
    case Primitive::kSlice: return "slice";
    case Primitive::kSigmoid: return "sigmoid";
    case Primitive::kTanh: return "tanh";
    case Primitive::kRelu: return "relu";
    case Primitive::kSum: return "sum";
    case Primitive::kMean: return "mean";
    case Primitive::kSquare: return "square";
    case Primitive::kLog: return "log";
    case Primitive::kExp: return "exp";
    case Primitive::kRsqrt: return "rsqrt";
  }
  return "unknown";
}

template <typename Scalar>
class Tape;

/// Shared handle to a dense value with an optional gradient slot.
///
/// Copies alias the same storage, so a parameter held by a model and the
/// same parameter captured by a tape see each other's gradient updates.
template <typename Scalar>
class Tensor {
 public:
  using MatrixType = Matrix<Scalar>;

  Tensor() = default;
  explicit Tensor(MatrixType values, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    impl_->value = std::move(values);
    impl_->requires_grad = requires_grad;
  }

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false) {
    return Tensor(MatrixType::Zero(rows, cols), requires_grad);
  }
  static Tensor constant(Index rows, Index cols, Scalar v) {
    return Tensor(MatrixType::Constant(rows, cols, v), false);
  }
  static Tensor scalar(Scalar v) { return constant(1, 1, v); }

  bool defined() const { return impl_ != nullptr; }
  Index rows() const { return impl_->value.rows(); }
  Index cols() const { return impl_->value.cols(); }
  Index size() const { return impl_->value.size(); }

  const MatrixType& value() const { return impl_->value; }
  MatrixType& value() { return impl_->value; }
  Scalar item() const {
    if (size() != 1) throw ContractError("item() on a non-scalar tensor");
    return impl_->value(0, 0);
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return impl_->grad.size() != 0; }
  const MatrixType& grad() const {
    if (!has_grad()) throw ContractError("tensor has no gradient");
    return impl_->grad;
  }
  MatrixType& grad_or_zeros() {
    if (!has_grad()) impl_->grad = MatrixType::Zero(rows(), cols());
    return impl_->grad;
  }
  void zero_grad() { impl_->grad.resize(0, 0); }

  /// Copy of the values with no link to any tape.
  Tensor detach() const { return Tensor(impl_->value, false); }

  bool same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    MatrixType value;
    MatrixType grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

namespace detail {

template <typename Scalar>
std::string shape_str(const Tensor<Scalar>& t) {
  std::ostringstream os;
  os << "[" << t.rows() << "x" << t.cols() << "]";
  return os.str();
}

template <typename Scalar>
[[noreturn]] void shape_error(Primitive p, std::span<const Tensor<Scalar>> in) {
  std::ostringstream os;
  os << primitive_name(p) << ": incompatible shapes";
  for (const auto& t : in) os << " " << shape_str(t);
  throw DimensionError(os.str());
}

// Elementwise operands must agree, or one of them is a single row.
template <typename Scalar>
bool broadcast_ok(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.cols()) return false;
  return a.rows() == b.rows() || a.rows() == 1 || b.rows() == 1;
}

template <typename Scalar>
Matrix<Scalar> expand_rows(const Matrix<Scalar>& m, Index rows) {
  if (m.rows() == rows) return m;
  return m.replicate(rows, 1);
}

// Gradient flowing into a possibly broadcast operand.
template <typename Scalar>
void accumulate(Tensor<Scalar>& t, const Matrix<Scalar>& g) {
  if (!t.requires_grad()) return;
  auto& dst = t.grad_or_zeros();
  if (dst.rows() == g.rows()) {
    dst += g;
  } else {
    dst += g.colwise().sum();
  }
}

}  // namespace detail

/// Ordered record of executed primitives.
///
/// A non-recording tape evaluates values only; it is what inference and
/// finite-difference probes use.
template <typename Scalar>
class Tape {
 public:
  using TensorType = Tensor<Scalar>;
  using MatrixType = Matrix<Scalar>;

  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() {
    nodes_.clear();
    min_relu_margin_ = std::numeric_limits<Scalar>::infinity();
  }

  /// Smallest |x| seen at a ReLU input since the last clear(). Gradient
  /// checks are only meaningful away from the kink.
  Scalar min_relu_margin() const { return min_relu_margin_; }

  /// Evaluates one primitive. `begin`/`count` select columns for kSlice and
  /// are ignored otherwise.
  TensorType apply(Primitive op, std::span<const TensorType> in, Index begin = 0,
                   Index count = 0) {
    MatrixType out = forward(op, in, begin, count);
    bool any_grad = false;
    for (const auto& t : in) any_grad = any_grad || t.requires_grad();
    TensorType result(std::move(out), recording_ && any_grad);
    if (result.requires_grad()) {
      nodes_.push_back(Node{op, std::vector<TensorType>(in.begin(), in.end()),
                            result, begin});
    }
    return result;
  }

  TensorType matmul(const TensorType& a, const TensorType& b) {
    return binary(Primitive::kMatmul, a, b);
  }
  TensorType add(const TensorType& a, const TensorType& b) {
    return binary(Primitive::kAdd, a, b);
  }
  TensorType mul(const TensorType& a, const TensorType& b) {
    return binary(Primitive::kMul, a, b);
  }
  TensorType concat(std::span<const TensorType> parts) {
    return apply(Primitive::kConcat, parts);
  }
  TensorType concat(const TensorType& a, const TensorType& b) {
    const TensorType parts[] = {a, b};
    return apply(Primitive::kConcat, parts);
  }
  TensorType slice(const TensorType& a, Index begin, Index count) {
    const TensorType in[] = {a};
    return apply(Primitive::kSlice, in, begin, count);
  }
  TensorType sigmoid(const TensorType& a) { return unary(Primitive::kSigmoid, a); }
  TensorType tanh(const TensorType& a) { return unary(Primitive::kTanh, a); }
  TensorType relu(const TensorType& a) { return unary(Primitive::kRelu, a); }
  TensorType sum(const TensorType& a) { return unary(Primitive::kSum, a); }
  TensorType mean(const TensorType& a) { return unary(Primitive::kMean, a); }
  TensorType square(const TensorType& a) { return unary(Primitive::kSquare, a); }
  TensorType log(const TensorType& a) { return unary(Primitive::kLog, a); }
  TensorType exp(const TensorType& a) { return unary(Primitive::kExp, a); }
  TensorType rsqrt(const TensorType& a) { return unary(Primitive::kRsqrt, a); }

  // Compositions used throughout the model code.
  TensorType scale(const TensorType& a, Scalar s) {
    return mul(a, TensorType::constant(1, a.cols(), s));
  }
  TensorType sub(const TensorType& a, const TensorType& b) {
    return add(a, scale(b, Scalar(-1)));
  }
  TensorType add_constant(const TensorType& a, Scalar c) {
    return add(a, TensorType::constant(1, a.cols(), c));
  }

  /// Fills d(loss)/d(t) for every tensor that took part in producing `loss`.
  /// Leaf gradients accumulate across calls; intermediate ones are reset.
  void backward(const TensorType& loss) {
    if (loss.size() != 1) {
      throw ContractError("backward: loss must be a 1x1 tensor, got " +
                          detail::shape_str(loss));
    }
    std::ptrdiff_t last = -1;
    for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(nodes_.size()) - 1; i >= 0;
         --i) {
      if (nodes_[i].output.same(loss)) {
        last = i;
        break;
      }
    }
    if (last < 0) throw ContractError("backward: loss was not produced on this tape");
    for (auto& n : nodes_) n.output.zero_grad();
    TensorType seed = loss;
    seed.grad_or_zeros().setOnes();
    for (std::ptrdiff_t i = last; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.output.has_grad()) continue;
      propagate(n);
    }
  }

 private:
  struct Node {
    Primitive op;
    std::vector<TensorType> inputs;
    TensorType output;
    Index begin;
  };

  TensorType unary(Primitive op, const TensorType& a) {
    const TensorType in[] = {a};
    return apply(op, in);
  }
  TensorType binary(Primitive op, const TensorType& a, const TensorType& b) {
    const TensorType in[] = {a, b};
    return apply(op, in);
  }

  MatrixType forward(Primitive op, std::span<const TensorType> in, Index begin,
                     Index count) {
    auto expect_arity = [&](std::size_t n) {
      if (in.size() != n) detail::shape_error<Scalar>(op, in);
    };
    switch (op) {
      case Primitive::kMatmul: {
        expect_arity(2);
        if (in[0].cols() != in[1].rows()) detail::shape_error<Scalar>(op, in);
        return in[0].value() * in[1].value();
      }
      case Primitive::kAdd:
      case Primitive::kMul: {
        expect_arity(2);
        if (!detail::broadcast_ok(in[0], in[1])) detail::shape_error<Scalar>(op, in);
        const Index rows = std::max(in[0].rows(), in[1].rows());
        MatrixType a = detail::expand_rows(in[0].value(), rows);
        MatrixType b = detail::expand_rows(in[1].value(), rows);
        if (op == Primitive::kAdd) return a + b;
        return a.cwiseProduct(b);
      }
      case Primitive::kConcat: {
        if (in.empty()) detail::shape_error<Scalar>(op, in);
        Index cols = 0;
        for (const auto& t : in) {
          if (t.rows() != in[0].rows()) detail::shape_error<Scalar>(op, in);
          cols += t.cols();
        }
        MatrixType out(in[0].rows(), cols);
        Index at = 0;
        for (const auto& t : in) {
          out.middleCols(at, t.cols()) = t.value();
          at += t.cols();
        }
        return out;
      }
      case Primitive::kSlice: {
        expect_arity(1);
        if (begin < 0 || count < 0 || begin + count > in[0].cols()) {
          detail::shape_error<Scalar>(op, in);
        }
        return in[0].value().middleCols(begin, count);
      }
      case Primitive::kSigmoid:
        expect_arity(1);
        return in[0].value().unaryExpr(
            [](Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); });
      case Primitive::kTanh:
        expect_arity(1);
        return in[0].value().array().tanh().matrix();
      case Primitive::kRelu: {
        expect_arity(1);
        const auto& x = in[0].value();
        if (recording_ && x.size() > 0) {
          min_relu_margin_ = std::min(min_relu_margin_, x.cwiseAbs().minCoeff());
        }
        return x.cwiseMax(Scalar(0));
      }
      case Primitive::kSum:
        expect_arity(1);
        return MatrixType::Constant(1, 1, in[0].value().sum());
      case Primitive::kMean:
        expect_arity(1);
        if (in[0].size() == 0) detail::shape_error<Scalar>(op, in);
        return MatrixType::Constant(1, 1, in[0].value().mean());
      case Primitive::kSquare:
        expect_arity(1);
        return in[0].value().array().square().matrix();
      case Primitive::kLog:
        expect_arity(1);
        return in[0].value().array().log().matrix();
      case Primitive::kExp:
        expect_arity(1);
        return in[0].value().array().exp().matrix();
      case Primitive::kRsqrt:
        expect_arity(1);
        return in[0].value().array().rsqrt().matrix();
    }
    detail::shape_error<Scalar>(op, in);
  }

  void propagate(Node& n) {
    const MatrixType& g = n.output.grad();
    const MatrixType& y = n.output.value();
    auto& in = n.inputs;
    switch (n.op) {
      case Primitive::kMatmul:
        if (in[0].requires_grad()) in[0].grad_or_zeros() += g * in[1].value().transpose();
        if (in[1].requires_grad()) in[1].grad_or_zeros() += in[0].value().transpose() * g;
        break;
      case Primitive::kAdd:
        detail::accumulate(in[0], g);
        detail::accumulate(in[1], g);
        break;
      case Primitive::kMul: {
        const Index rows = g.rows();
        if (in[0].requires_grad()) {
          detail::accumulate(
              in[0], MatrixType(g.cwiseProduct(detail::expand_rows(in[1].value(), rows))));
        }
        if (in[1].requires_grad()) {
          detail::accumulate(
              in[1], MatrixType(g.cwiseProduct(detail::expand_rows(in[0].value(), rows))));
        }
        break;
      }
      case Primitive::kConcat: {
        Index at = 0;
        for (auto& t : in) {
          if (t.requires_grad()) t.grad_or_zeros() += g.middleCols(at, t.cols());
          at += t.cols();
        }
        break;
      }
      case Primitive::kSlice:
        if (in[0].requires_grad()) {
          in[0].grad_or_zeros().middleCols(n.begin, g.cols()) += g;
        }
        break;
      case Primitive::kSigmoid:
        if (in[0].requires_grad()) {
          in[0].grad_or_zeros().array() += g.array() * y.array() * (Scalar(1) - y.array());
        }
        break;
      case Primitive::kTanh:
        if (in[0].requires_grad()) {
          in[0].grad_or_zeros().array() += g.array() * (Scalar(1) - y.array().square());
        }
        break;
      case Primitive::kRelu:
        // Subgradient at exactly 0 is 0.
        if (in[0].requires_grad()) {
          in[0].grad_or_zeros().array() +=
              g.array() * (in[0].value().array() > Scalar(0)).template cast<Scalar>();
        }
        break;
      case Primitive::kSum:
        if (in[0].requires_grad()) in[0].grad_or_zeros().array() += g(0, 0);
        break;
      case Primitive::kMean:
        if (in[0].requires_grad()) {
          in[0].grad_or_zeros().array() += g(0, 0) / static_cast<Scalar>(in[0].size());
        }
        break;
      case Primitive::kSquare:
        if (in[0].requires_grad()) {
          in[0].grad_or_zeros().array() += Scalar(2) * g.array() * in[0].value().array();
        }
        break;
      case Primitive::kLog:
        if (in[0].requires_grad()) {
          in[0].grad_or_zeros().array() += g.array() / in[0].value().array();
        }
        break;
      case Primitive::kExp:
        if (in[0].requires_grad()) in[0].grad_or_zeros().array() += g.array() * y.array();
        break;
      case Primitive::kRsqrt:
        if (in[0].requires_grad()) {
          in[0].grad_or_zeros().array() += Scalar(-0.5) * g.array() * y.array().cube();
        }
        break;
    }
  }

  std::vector<Node> nodes_;
  bool recording_ = true;
  Scalar min_relu_margin_ = std::numeric_limits<Scalar>::infinity();
};

/// Builds a scalar loss on the given tape from tensors it closes over.
template <typename Scalar>
using LossFn = std::function<Tensor<Scalar>(Tape<Scalar>&)>;

/// Central-difference gradient of `f` w.r.t. every coordinate of `params`,
/// one matrix per parameter. Values are restored afterwards.
template <typename Scalar>
std::vector<Matrix<Scalar>> numeric_gradient(const LossFn<Scalar>& f,
                                             std::span<Tensor<Scalar>> params,
                                             Scalar step) {
  if (!(step > Scalar(0))) throw ContractError("numeric_gradient: step must be > 0");
  auto probe = [&]() {
    Tape<Scalar> tape(false);
    const Scalar v = f(tape).item();
    if (!std::isfinite(v)) throw NumericError("numeric_gradient: non-finite loss");
    return v;
  };
  std::vector<Matrix<Scalar>> out;
  out.reserve(params.size());
  for (auto& p : params) {
    Matrix<Scalar> g(p.rows(), p.cols());
    for (Index i = 0; i < p.size(); ++i) {
      Scalar& x = p.value().data()[i];
      const Scalar saved = x;
      x = saved + step;
      const Scalar up = probe();
      x = saved - step;
      const Scalar down = probe();
      x = saved;
      g.data()[i] = (up - down) / (Scalar(2) * step);
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor).
template <typename Scalar>
Scalar relative_gradient_error(std::span<const Matrix<Scalar>> analytic,
                               std::span<const Matrix<Scalar>> numeric,
                               Scalar floor = Scalar(1e-8)) {
  if (analytic.size() != numeric.size()) {
    throw DimensionError("relative_gradient_error: parameter count mismatch");
  }
  Scalar worst = 0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const auto& a = analytic[k];
    const auto& n = numeric[k];
    if (a.rows() != n.rows() || a.cols() != n.cols()) {
      throw DimensionError("relative_gradient_error: gradient shape mismatch");
    }
    for (Index i = 0; i < a.size(); ++i) {
      const Scalar ga = a.data()[i];
      const Scalar gn = n.data()[i];
      const Scalar denom = std::max({std::abs(ga), std::abs(gn), floor});
      worst = std::max(worst, std::abs(ga - gn) / denom);
    }
  }
  return worst;
}

/// Analytic gradients of `f` (one backward pass) for each of `params`.
template <typename Scalar>
std::vector<Matrix<Scalar>> analytic_gradient(const LossFn<Scalar>& f,
                                              std::span<Tensor<Scalar>> params) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tape<Scalar> tape;
  Tensor<Scalar> loss = f(tape);
  if (!std::isfinite(loss.item())) throw NumericError("analytic_gradient: non-finite loss");
  tape.backward(loss);
  std::vector<Matrix<Scalar>> out;
  out.reserve(params.size());
  for (auto& p : params) {
    out.push_back(p.has_grad() ? p.grad() : Matrix<Scalar>::Zero(p.rows(), p.cols()));
  }
  return out;
}

/// Largest relative disagreement between backward() and central differences.
template <typename Scalar>
Scalar finite_difference_check(const LossFn<Scalar>& f, std::span<Tensor<Scalar>> params,
                               Scalar step) {
  const auto analytic = analytic_gradient(f, params);
  const auto numeric = numeric_gradient(f, params, step);
  return relative_gradient_error<Scalar>(analytic, numeric);
}

/// Single-parameter form: `f` maps the parameter tensor to a scalar.
template <typename Scalar>
Scalar finite_difference_check(
    const std::function<Tensor<Scalar>(Tape<Scalar>&, const Tensor<Scalar>&)>& f,
    Tensor<Scalar> theta, Scalar step) {
  Tensor<Scalar> params[] = {theta};
  LossFn<Scalar> bound = [&](Tape<Scalar>& tape) { return f(tape, theta); };
  return finite_difference_check<Scalar>(bound, params, step);
}

}  // namespace lcpseq::ad
