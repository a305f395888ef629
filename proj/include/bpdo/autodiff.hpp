#pragma once

// Reverse-mode evaluation over tensor-valued nodes. Every node holds a dense
// row-major matrix; fields are carried as (channels x rows*cols) matrices so
// their storage order matches TensorField.

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bpdo/tensors.hpp"

namespace bpdo::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its Tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  int id() const noexcept { return id_; }

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double item() const;

 private:
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;

  friend class Tape;
};

/// One evaluation context. Not thread-safe; use one tape per thread.
class Tape {
 public:
  /// Receives the gradient with respect to the node's value and the value
  /// itself, and adds contributions into parents through grad_buffer().
  using Backward = std::function<void(const Matrix& grad_out, const Matrix& out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);

  /// Leaf initialized from external storage (row-major rows x cols). Binding
  /// the same storage twice returns the existing leaf.
  Var parameter(std::span<const double> storage, Index rows, Index cols);
  /// Leaf previously bound to `storage`, or an invalid Var.
  Var find_parameter(const double* storage) const;

  Var record(Matrix value, std::span<const Var> parents, Backward backward);
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
    return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                  std::move(backward));
  }

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)].value; }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)].requires_grad; }

  /// Gradient with respect to `v` from the last backward(); zeros when the
  /// output does not depend on `v`.
  Matrix grad(Var v) const;
  /// Zero-initialized accumulation buffer; only valid inside backward().
  Matrix& grad_buffer(Var v);

  /// Seeds d(scalar)/d(scalar) = 1 and propagates to every node. Throws
  /// InvalidInput if `scalar` is not 1x1.
  void backward(Var scalar);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  std::vector<std::pair<const double*, int>> parameters_;
};

struct GridShape {
  Index rows = 0;
  Index cols = 0;
  Index size() const { return rows * cols; }
};

/// (channels x rows*cols) copy of a field.
Matrix field_matrix(const TensorField& field);
/// Inverse of field_matrix for a (channels x grid.size()) matrix.
TensorField matrix_field(const Matrix& m, GridShape grid);
inline GridShape grid_of(const TensorField& f) {
  return {static_cast<Index>(f.rows()), static_cast<Index>(f.cols())};
}

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product of equal-shape nodes.
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var matmul(Var a, Var b);

/// x (n x in), w (out x in), b (out entries) -> x w^T + b, one output row per input row.
Var affine_rows(Var x, Var w, Var b);
/// x (cin x hw), w (cout x cin), b (cout entries) -> w x + b; a 1x1 convolution.
Var conv1x1(Var x, Var w, Var b);

Var relu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
/// Softmax over consecutive groups of `group` columns within each row.
Var softmax_groups(Var x, Index group);

/// Multiplies row i of x by v[i]; v holds x.rows() entries in any shape.
Var scale_rows(Var x, Var v);
/// Multiplies column j of x by v[j]; v holds x.cols() entries in any shape.
Var scale_cols(Var x, Var v);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var x, Index start, Index count);
Var reshape(Var x, Index rows, Index cols);
Var transpose(Var x);
/// Each row repeated `times` times consecutively.
Var repeat_rows(Var x, Index times);

Var mean_cols(Var x);  // rows x 1
Var mean_rows(Var x);  // 1 x cols
Var sum(Var x);
Var mean(Var x);

/// Single-channel k x k correlation with zero padding and stride 1 over a
/// 1 x hw map. With `transposed`, applies the stride-1 transposed
/// convolution instead (correlation with the flipped kernel).
Var conv2d_same(Var x, GridShape grid, Var kernel, Var bias, bool transposed);

/// Bilinear sampling of a (C x hw) field at n points given as an (n x 2)
/// matrix of (x, y). Returns (n x C). Out-of-grid neighbors read as zero.
Var bilinear_sample(Var field, GridShape grid, Var points);

}  // namespace bpdo::ad
