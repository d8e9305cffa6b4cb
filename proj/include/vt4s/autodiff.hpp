// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records every operation of one forward pass. Values are row-major
// Eigen matrices; a row is one token or one sample. All row-wise kernels
// compute each output row from the corresponding input row only, with a fixed
// summation order, so a row's value never depends on how many rows follow it.
// The causal decoder relies on that property to be bitwise causal.

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace vt4s::ad {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A named trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  Parameter() = default;
  Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)) {
    grad = Mat::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  [[nodiscard]] Tape* tape() const { return tape_; }
  [[nodiscard]] int id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr && id_ >= 0; }
  [[nodiscard]] const Mat& value() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  /// Scalar value of a 1x1 node.
  [[nodiscard]] double item() const { return value()(0, 0); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Mat& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Owned value that never receives a gradient.
  Var constant(Mat value);
  /// Borrowed value (must outlive the tape) that never receives a gradient.
  Var constant_ref(const Mat& value);
  /// Owned leaf; its gradient is readable through grad() after backward().
  Var leaf(Mat value);
  /// Borrowed parameter. When trainable, backward() adds into p.grad.
  Var param(Parameter& p, bool trainable = true);

  [[nodiscard]] const Mat& value(Var v) const;
  [[nodiscard]] bool requires_grad(Var v) const;
  /// Gradient of the last backward() root with respect to v (zeros if unreached).
  [[nodiscard]] Mat grad(Var v) const;

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to every leaf.
  void backward(Var root);

  void clear();
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  Var record(Mat value, std::span<const Var> parents, Backward backward);
  void accumulate(Var v, const Mat& g);

 private:
  struct Node {
    Mat owned;
    const Mat* ref = nullptr;
    Mat grad;
    Parameter* sink = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
    [[nodiscard]] const Mat& value() const { return ref != nullptr ? *ref : owned; }
  };
  std::vector<Node> nodes_;
};

inline const Mat& Var::value() const { return tape_->value(*this); }

// ---- linear algebra ----------------------------------------------------------

/// a[m x k] * b[k x n], evaluated row by row.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Adds a [1 x n] row to every row of a [m x n].
Var add_row(Var a, Var row);
Var scale(Var a, double factor);
/// x * w + b for x[m x in], w[in x out], b[1 x out].
Var linear(Var x, Var w, Var b);

// ---- shape -------------------------------------------------------------------

Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count);
/// Row-major reinterpretation; rows*cols must match.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
/// Column mean over rows: [m x n] -> [1 x n].
Var mean_rows(Var a);
Var sum_all(Var a);
Var mean_all(Var a);

// ---- nonlinearities ----------------------------------------------------------

Var relu(Var a);
/// Row-wise layer normalization with affine gamma/beta of shape [1 x n].
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// Row-wise x / (||x|| + eps).
Var l2_normalize_rows(Var x, double eps = 1e-12);

/// Multi-head scaled dot-product attention over q, k, v of shape [T x d].
/// With causal set, query i attends to keys 0..i only.
Var multi_head_attention(Var q, Var k, Var v, int n_head, bool causal);

// ---- losses ------------------------------------------------------------------

/// Softmax cross-entropy of a [1 x N] logit row against class `target`.
Var cross_entropy(Var logits, int target);

enum class TripletForm {
  kCorrected,  ///< max(m - <a,p> + <a,n>, 0)
  kLiteral,    ///< max(<a,p> - <a,n> + m, 0)
};

/// Mean over all negatives i != gt of the triplet margin term, with anchor a
/// [1 x d], positive table row gt and negatives the other rows of `table`.
Var masked_triplet(Var anchor, const Mat& table, int gt, double margin, TripletForm form);

/// Cosine similarity of a [1 x d] against a constant [1 x d] target; norms are
/// clamped below at eps.
Var cosine_to(Var a, const Mat& target, double eps = 1e-12);

/// Elementwise mean |a - target|; subgradient 0 at exact ties.
Var l1_mean_to(Var a, const Mat& target);

}  // namespace vt4s::ad
