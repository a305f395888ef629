#include "bpdo/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bilinear_tap.hpp"
#include "bpdo/error.hpp"

namespace bpdo::ad {

Matrix field_matrix(const TensorField& field) {
  Matrix m(static_cast<Index>(field.channels()), static_cast<Index>(field.plane_size()));
  std::copy(field.data().begin(), field.data().end(), m.data());
  return m;
}

TensorField matrix_field(const Matrix& m, GridShape grid) {
  if (m.cols() != grid.size()) throw InvalidInput("matrix_field: column count != grid size");
  return TensorField(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(grid.rows),
                     static_cast<std::size_t>(grid.cols),
                     std::vector<double>(m.data(), m.data() + m.size()));
}

const Matrix& Var::value() const { return tape_->value(*this); }

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw InvalidInput("Var::item: node is not 1x1");
  return v(0, 0);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(std::span<const double> storage, Index rows, Index cols) {
  if (static_cast<Index>(storage.size()) != rows * cols) {
    throw InvalidInput("Tape::parameter: storage size does not match shape");
  }
  if (Var existing = find_parameter(storage.data()); existing.valid()) {
    if (existing.rows() != rows || existing.cols() != cols) {
      throw InvalidInput("Tape::parameter: storage rebound with a different shape");
    }
    return existing;
  }
  Matrix m(rows, cols);
  std::copy(storage.begin(), storage.end(), m.data());
  Var v = variable(std::move(m));
  parameters_.emplace_back(storage.data(), v.id_);
  return v;
}

Var Tape::find_parameter(const double* storage) const {
  for (const auto& [ptr, id] : parameters_) {
    if (ptr == storage) return Var(const_cast<Tape*>(this), id);
  }
  return {};
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape_ != this) throw InvalidInput("Tape::record: parent belongs to another tape");
    n.requires_grad = n.requires_grad || requires_grad(p);
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id_)];
  if (n.has_grad) return n.grad;
  return Matrix::Zero(n.value.rows(), n.value.cols());
}

Matrix& Tape::grad_buffer(Var v) {
  Node& n = nodes_[static_cast<std::size_t>(v.id_)];
  if (!n.has_grad) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var scalar) {
  if (scalar.tape_ != this) throw InvalidInput("Tape::backward: output belongs to another tape");
  if (value(scalar).size() != 1) throw InvalidInput("Tape::backward: output is not a scalar");
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  grad_buffer(scalar)(0, 0) = 1.0;
  for (int id = scalar.id_; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.has_grad && n.backward) n.backward(n.grad, n.value);
  }
}

namespace {

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                       std::to_string(b.cols()));
  }
}

Eigen::Map<const Eigen::RowVectorXd> flat(const Matrix& m) { return {m.data(), m.size()}; }

template <class Expr>
void accumulate_flat(Tape& t, Var v, const Expr& g) {
  Matrix& buf = t.grad_buffer(v);
  Eigen::Map<Eigen::RowVectorXd>(buf.data(), buf.size()) += g;
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tape& t = a.tape();
  return t.record(a.value() + b.value(), {a, b}, [&t, a, b](const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.grad_buffer(a) += g;
    if (t.requires_grad(b)) t.grad_buffer(b) += g;
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tape& t = a.tape();
  return t.record(a.value() - b.value(), {a, b}, [&t, a, b](const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.grad_buffer(a) += g;
    if (t.requires_grad(b)) t.grad_buffer(b) -= g;
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tape& t = a.tape();
  return t.record(a.value().cwiseProduct(b.value()), {a, b},
                  [&t, a, b](const Matrix& g, const Matrix&) {
                    if (t.requires_grad(a)) t.grad_buffer(a) += g.cwiseProduct(b.value());
                    if (t.requires_grad(b)) t.grad_buffer(b) += g.cwiseProduct(a.value());
                  });
}

Var scale(Var a, double s) {
  Tape& t = a.tape();
  return t.record(a.value() * s, {a},
                  [&t, a, s](const Matrix& g, const Matrix&) { t.grad_buffer(a) += g * s; });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw InvalidInput("matmul: inner dimensions differ");
  Tape& t = a.tape();
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [&t, a, b](const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.grad_buffer(a).noalias() += g * b.value().transpose();
    if (t.requires_grad(b)) t.grad_buffer(b).noalias() += a.value().transpose() * g;
  });
}

Var affine_rows(Var x, Var w, Var b) {
  if (x.cols() != w.cols()) {
    throw InvalidInput("affine_rows: input width " + std::to_string(x.cols()) +
                       " != weight in_dim " + std::to_string(w.cols()));
  }
  if (b.value().size() != w.rows()) throw InvalidInput("affine_rows: bias length != out_dim");
  Tape& t = x.tape();
  Matrix out = x.value() * w.value().transpose();
  out.rowwise() += flat(b.value());
  return t.record(std::move(out), {x, w, b}, [&t, x, w, b](const Matrix& g, const Matrix&) {
    if (t.requires_grad(x)) t.grad_buffer(x).noalias() += g * w.value();
    if (t.requires_grad(w)) t.grad_buffer(w).noalias() += g.transpose() * x.value();
    if (t.requires_grad(b)) accumulate_flat(t, b, g.colwise().sum());
  });
}

Var conv1x1(Var x, Var w, Var b) {
  if (x.rows() != w.cols()) {
    throw InvalidInput("conv1x1: input channels " + std::to_string(x.rows()) +
                       " != weight in_dim " + std::to_string(w.cols()));
  }
  if (b.value().size() != w.rows()) throw InvalidInput("conv1x1: bias length != out channels");
  Tape& t = x.tape();
  Matrix out = w.value() * x.value();
  out.colwise() += flat(b.value()).transpose();
  return t.record(std::move(out), {x, w, b}, [&t, x, w, b](const Matrix& g, const Matrix&) {
    if (t.requires_grad(x)) t.grad_buffer(x).noalias() += w.value().transpose() * g;
    if (t.requires_grad(w)) t.grad_buffer(w).noalias() += g * x.value().transpose();
    if (t.requires_grad(b)) accumulate_flat(t, b, g.rowwise().sum().transpose());
  });
}

Var relu(Var x) {
  Tape& t = x.tape();
  return t.record(x.value().cwiseMax(0.0), {x}, [&t, x](const Matrix& g, const Matrix&) {
    t.grad_buffer(x) += (x.value().array() > 0.0).select(g, 0.0);
  });
}

Var sigmoid(Var x) {
  Tape& t = x.tape();
  Matrix y = (1.0 + (-x.value().array()).exp()).inverse().matrix();
  return t.record(std::move(y), {x}, [&t, x](const Matrix& g, const Matrix& y) {
    t.grad_buffer(x).array() += g.array() * y.array() * (1.0 - y.array());
  });
}

Var tanh(Var x) {
  Tape& t = x.tape();
  Matrix y = x.value().array().tanh().matrix();
  return t.record(std::move(y), {x}, [&t, x](const Matrix& g, const Matrix& y) {
    t.grad_buffer(x).array() += g.array() * (1.0 - y.array().square());
  });
}

Var softmax_groups(Var x, Index group) {
  if (group <= 0 || x.cols() % group != 0) {
    throw InvalidInput("softmax_groups: column count is not a multiple of the group size");
  }
  Tape& t = x.tape();
  const Matrix& xv = x.value();
  Matrix y(xv.rows(), xv.cols());
  for (Index r = 0; r < xv.rows(); ++r) {
    for (Index c0 = 0; c0 < xv.cols(); c0 += group) {
      auto in = xv.row(r).segment(c0, group);
      auto out = y.row(r).segment(c0, group);
      out = (in.array() - in.maxCoeff()).exp().matrix();
      out /= out.sum();
    }
  }
  return t.record(std::move(y), {x}, [&t, x, group](const Matrix& g, const Matrix& y) {
    Matrix& dx = t.grad_buffer(x);
    for (Index r = 0; r < y.rows(); ++r) {
      for (Index c0 = 0; c0 < y.cols(); c0 += group) {
        auto yg = y.row(r).segment(c0, group).array();
        auto gg = g.row(r).segment(c0, group).array();
        const double dot = (yg * gg).sum();
        dx.row(r).segment(c0, group).array() += yg * (gg - dot);
      }
    }
  });
}

Var scale_rows(Var x, Var v) {
  if (v.value().size() != x.rows()) throw InvalidInput("scale_rows: scale length != rows");
  Tape& t = x.tape();
  const auto col = flat(v.value()).transpose();
  Matrix out = x.value().array().colwise() * col.array();
  return t.record(std::move(out), {x, v}, [&t, x, v](const Matrix& g, const Matrix&) {
    const auto col = flat(v.value()).transpose();
    if (t.requires_grad(x)) t.grad_buffer(x).array() += g.array().colwise() * col.array();
    if (t.requires_grad(v)) {
      accumulate_flat(t, v, g.cwiseProduct(x.value()).rowwise().sum().transpose());
    }
  });
}

Var scale_cols(Var x, Var v) {
  if (v.value().size() != x.cols()) throw InvalidInput("scale_cols: scale length != cols");
  Tape& t = x.tape();
  const auto row = flat(v.value());
  Matrix out = x.value().array().rowwise() * row.array();
  return t.record(std::move(out), {x, v}, [&t, x, v](const Matrix& g, const Matrix&) {
    const auto row = flat(v.value());
    if (t.requires_grad(x)) t.grad_buffer(x).array() += g.array().rowwise() * row.array();
    if (t.requires_grad(v)) accumulate_flat(t, v, g.cwiseProduct(x.value()).colwise().sum());
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidInput("concat_rows: no inputs");
  Tape& t = parts.front().tape();
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const Var& p : parts) {
    if (p.cols() != cols) throw InvalidInput("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [&t, keep](const Matrix& g, const Matrix&) {
    Index r = 0;
    for (const Var& p : keep) {
      if (t.requires_grad(p)) t.grad_buffer(p) += g.middleRows(r, p.rows());
      r += p.rows();
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidInput("concat_cols: no inputs");
  Tape& t = parts.front().tape();
  Index cols = 0;
  const Index rows = parts.front().rows();
  for (const Var& p : parts) {
    if (p.rows() != rows) throw InvalidInput("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [&t, keep](const Matrix& g, const Matrix&) {
    Index c = 0;
    for (const Var& p : keep) {
      if (t.requires_grad(p)) t.grad_buffer(p) += g.middleCols(c, p.cols());
      c += p.cols();
    }
  });
}

Var slice_rows(Var x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.rows()) {
    throw InvalidInput("slice_rows: range out of bounds");
  }
  Tape& t = x.tape();
  return t.record(x.value().middleRows(start, count), {x},
                  [&t, x, start, count](const Matrix& g, const Matrix&) {
                    t.grad_buffer(x).middleRows(start, count) += g;
                  });
}

Var reshape(Var x, Index rows, Index cols) {
  if (rows * cols != x.value().size()) throw InvalidInput("reshape: element count changes");
  Tape& t = x.tape();
  Matrix out = Eigen::Map<const Matrix>(x.value().data(), rows, cols);
  return t.record(std::move(out), {x}, [&t, x](const Matrix& g, const Matrix&) {
    accumulate_flat(t, x, flat(g));
  });
}

Var transpose(Var x) {
  Tape& t = x.tape();
  return t.record(x.value().transpose(), {x}, [&t, x](const Matrix& g, const Matrix&) {
    t.grad_buffer(x) += g.transpose();
  });
}

Var repeat_rows(Var x, Index times) {
  if (times <= 0) throw InvalidInput("repeat_rows: times must be positive");
  Tape& t = x.tape();
  const Matrix& xv = x.value();
  Matrix out(xv.rows() * times, xv.cols());
  for (Index r = 0; r < xv.rows(); ++r) {
    for (Index k = 0; k < times; ++k) out.row(r * times + k) = xv.row(r);
  }
  return t.record(std::move(out), {x}, [&t, x, times](const Matrix& g, const Matrix&) {
    Matrix& dx = t.grad_buffer(x);
    for (Index r = 0; r < dx.rows(); ++r) {
      dx.row(r) += g.middleRows(r * times, times).colwise().sum();
    }
  });
}

Var mean_cols(Var x) {
  Tape& t = x.tape();
  const double n = static_cast<double>(x.cols());
  return t.record(x.value().rowwise().mean(), {x}, [&t, x, n](const Matrix& g, const Matrix&) {
    t.grad_buffer(x).colwise() += g.col(0) / n;
  });
}

Var mean_rows(Var x) {
  Tape& t = x.tape();
  const double n = static_cast<double>(x.rows());
  return t.record(x.value().colwise().mean(), {x}, [&t, x, n](const Matrix& g, const Matrix&) {
    t.grad_buffer(x).rowwise() += g.row(0) / n;
  });
}

Var sum(Var x) {
  Tape& t = x.tape();
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return t.record(std::move(out), {x}, [&t, x](const Matrix& g, const Matrix&) {
    t.grad_buffer(x).array() += g(0, 0);
  });
}

Var mean(Var x) {
  if (x.value().size() == 0) throw InvalidInput("mean: empty input");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var conv2d_same(Var x, GridShape grid, Var kernel, Var bias, bool transposed) {
  const Index k = kernel.rows();
  if (kernel.cols() != k || k % 2 == 0) throw InvalidInput("conv2d_same: kernel must be odd square");
  if (k > grid.rows || k > grid.cols) throw InvalidInput("conv2d_same: kernel larger than field");
  if (x.value().size() != grid.size()) throw InvalidInput("conv2d_same: input size != grid");
  if (bias.value().size() != 1) throw InvalidInput("conv2d_same: bias must be a single value");
  Tape& t = x.tape();
  const Index pad = k / 2;
  const Index sign = transposed ? -1 : 1;
  const double* in = x.value().data();
  const double* kv = kernel.value().data();
  Matrix out = Matrix::Constant(1, grid.size(), bias.value()(0, 0));
  double* o = out.data();
  for (Index r = 0; r < grid.rows; ++r) {
    for (Index c = 0; c < grid.cols; ++c) {
      double acc = 0.0;
      for (Index i = 0; i < k; ++i) {
        const Index rr = r + sign * (i - pad);
        if (rr < 0 || rr >= grid.rows) continue;
        for (Index j = 0; j < k; ++j) {
          const Index cc = c + sign * (j - pad);
          if (cc < 0 || cc >= grid.cols) continue;
          acc += kv[i * k + j] * in[rr * grid.cols + cc];
        }
      }
      o[r * grid.cols + c] += acc;
    }
  }
  return t.record(std::move(out), {x, kernel, bias},
                  [&t, x, kernel, bias, grid, k, pad, sign](const Matrix& g, const Matrix&) {
                    const bool need_x = t.requires_grad(x);
                    const bool need_k = t.requires_grad(kernel);
                    double* dx = need_x ? t.grad_buffer(x).data() : nullptr;
                    double* dk = need_k ? t.grad_buffer(kernel).data() : nullptr;
                    const double* in = x.value().data();
                    const double* kv = kernel.value().data();
                    const double* gv = g.data();
                    for (Index r = 0; r < grid.rows; ++r) {
                      for (Index c = 0; c < grid.cols; ++c) {
                        const double go = gv[r * grid.cols + c];
                        if (go == 0.0) continue;
                        for (Index i = 0; i < k; ++i) {
                          const Index rr = r + sign * (i - pad);
                          if (rr < 0 || rr >= grid.rows) continue;
                          for (Index j = 0; j < k; ++j) {
                            const Index cc = c + sign * (j - pad);
                            if (cc < 0 || cc >= grid.cols) continue;
                            const Index src = rr * grid.cols + cc;
                            if (dx) dx[src] += kv[i * k + j] * go;
                            if (dk) dk[i * k + j] += in[src] * go;
                          }
                        }
                      }
                    }
                    if (t.requires_grad(bias)) t.grad_buffer(bias).array() += g.sum();
                  });
}

Var bilinear_sample(Var field, GridShape grid, Var points) {
  if (field.value().size() == 0) throw InvalidInput("bilinear_sample: empty field");
  if (field.cols() != grid.size()) throw InvalidInput("bilinear_sample: field size != grid");
  if (points.cols() != 2) throw InvalidInput("bilinear_sample: points must be n x 2");
  if (!points.value().allFinite()) throw InvalidInput("bilinear_sample: non-finite point");
  Tape& t = field.tape();
  const Matrix& f = field.value();
  const Matrix& p = points.value();
  const Index channels = f.rows();
  const auto rows = static_cast<std::size_t>(grid.rows);
  const auto cols = static_cast<std::size_t>(grid.cols);
  Matrix out = Matrix::Zero(p.rows(), channels);
  for (Index i = 0; i < p.rows(); ++i) {
    const auto tap = detail::bilinear_tap(p(i, 0), p(i, 1), rows, cols);
    for (int k = 0; k < 4; ++k) {
      if (tap.index[k] < 0) continue;
      out.row(i) += tap.weight[k] * f.col(static_cast<Index>(tap.index[k])).transpose();
    }
  }
  return t.record(
      std::move(out), {field, points}, [&t, field, points, rows, cols](const Matrix& g, const Matrix&) {
        const Matrix& f = field.value();
        const Matrix& p = points.value();
        const bool need_f = t.requires_grad(field);
        const bool need_p = t.requires_grad(points);
        Matrix* df = need_f ? &t.grad_buffer(field) : nullptr;
        Matrix* dp = need_p ? &t.grad_buffer(points) : nullptr;
        Eigen::RowVectorXd corner[4];
        for (Index i = 0; i < p.rows(); ++i) {
          const auto tap = detail::bilinear_tap(p(i, 0), p(i, 1), rows, cols);
          for (int k = 0; k < 4; ++k) {
            if (tap.index[k] < 0) {
              corner[k] = Eigen::RowVectorXd::Zero(f.rows());
              continue;
            }
            const auto idx = static_cast<Index>(tap.index[k]);
            corner[k] = f.col(idx).transpose();
            if (df) df->col(idx) += tap.weight[k] * g.row(i).transpose();
          }
          if (dp) {
            const auto gi = g.row(i);
            const double ddx = (1.0 - tap.fy) * gi.dot(corner[1] - corner[0]) +
                               tap.fy * gi.dot(corner[3] - corner[2]);
            const double ddy = (1.0 - tap.fx) * gi.dot(corner[2] - corner[0]) +
                               tap.fx * gi.dot(corner[3] - corner[1]);
            (*dp)(i, 0) += ddx;
            (*dp)(i, 1) += ddy;
          }
        }
      });
}

}  // namespace bpdo::ad
