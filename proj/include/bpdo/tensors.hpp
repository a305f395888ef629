#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "bpdo/random.hpp"

namespace bpdo {

/// Sub-pixel location in feature-grid units. x is the column, y the row, and
/// (0, 0) is the center of the top-left cell.
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Dense channels x rows x cols field stored row-major as (channel, row, col).
class TensorField {
 public:
  TensorField() = default;
  TensorField(std::size_t channels, std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Throws InvalidInput if the data length disagrees with the shape or any
  /// value is non-finite.
  TensorField(std::size_t channels, std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t channels() const noexcept { return channels_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t plane_size() const noexcept { return rows_ * cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double at(std::size_t c, std::size_t r, std::size_t col) const {
    return data_[(c * rows_ + r) * cols_ + col];
  }
  double& at(std::size_t c, std::size_t r, std::size_t col) {
    return data_[(c * rows_ + r) * cols_ + col];
  }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> plane(std::size_t c) const {
    return std::span<const double>(data_).subspan(c * plane_size(), plane_size());
  }
  std::span<double> plane(std::size_t c) {
    return std::span<double>(data_).subspan(c * plane_size(), plane_size());
  }

  /// Single-channel copy of channel `c`.
  TensorField channel(std::size_t c) const;

  /// Throws InvalidInput when a value is NaN or infinite.
  void validate_finite() const;

  friend bool operator==(const TensorField&, const TensorField&) = default;

 private:
  std::size_t channels_ = 0;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Fully connected map y = W x + b with W stored out_dim x in_dim row-major.
struct LinearParams {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  LinearParams() = default;
  LinearParams(std::size_t in, std::size_t out)
      : in_dim(in), out_dim(out), weight(in * out, 0.0), bias(out, 0.0) {}

  /// Uniform Glorot-style initialization scaled by `gain`; biases start at 0.
  static LinearParams random(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0);

  void validate() const;

  friend bool operator==(const LinearParams&, const LinearParams&) = default;
};

enum class Activation { relu, sigmoid, tanh, softmax };

/// Parses "relu", "sigmoid", "tanh", or "softmax".
Activation parse_activation(std::string_view name);

/// Bilinear interpolation of every channel at `p`. Neighbors outside the grid
/// read as zero.
std::vector<double> bilinear_sample(const TensorField& field, Point2 p);

std::vector<double> linear_apply(const LinearParams& params, std::span<const double> input);

std::vector<double> activation(Activation kind, std::span<const double> input);

}  // namespace bpdo
