#include "bpdo/tensors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bilinear_tap.hpp"
#include "bpdo/error.hpp"

namespace bpdo {

TensorField::TensorField(std::size_t channels, std::size_t rows, std::size_t cols, double fill)
    : channels_(channels), rows_(rows), cols_(cols), data_(channels * rows * cols, fill) {
  if (!std::isfinite(fill)) throw InvalidInput("TensorField: non-finite fill value");
}

TensorField::TensorField(std::size_t channels, std::size_t rows, std::size_t cols,
                         std::vector<double> data)
    : channels_(channels), rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != channels * rows * cols) {
    throw InvalidInput("TensorField: data length " + std::to_string(data_.size()) +
                       " does not match shape " + std::to_string(channels) + "x" +
                       std::to_string(rows) + "x" + std::to_string(cols));
  }
  validate_finite();
}

TensorField TensorField::channel(std::size_t c) const {
  if (c >= channels_) throw InvalidInput("TensorField: channel index out of range");
  auto p = plane(c);
  return TensorField(1, rows_, cols_, std::vector<double>(p.begin(), p.end()));
}

void TensorField::validate_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) throw InvalidInput("TensorField: non-finite value");
  }
}

LinearParams LinearParams::random(std::size_t in, std::size_t out, Rng& rng, double gain) {
  LinearParams p(in, out);
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : p.weight) w = rng.uniform(-limit, limit);
  return p;
}

void LinearParams::validate() const {
  if (in_dim == 0 || out_dim == 0) throw InvalidInput("LinearParams: zero dimension");
  if (weight.size() != in_dim * out_dim || bias.size() != out_dim) {
    throw InvalidInput("LinearParams: weight/bias lengths inconsistent with dims");
  }
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  if (name == "softmax") return Activation::softmax;
  throw InvalidInput("unknown activation '" + std::string(name) + "'");
}

std::vector<double> bilinear_sample(const TensorField& field, Point2 p) {
  if (field.empty()) throw InvalidInput("bilinear_sample: empty field");
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
    throw InvalidInput("bilinear_sample: non-finite point");
  }
  const auto tap = detail::bilinear_tap(p.x, p.y, field.rows(), field.cols());
  std::vector<double> out(field.channels(), 0.0);
  for (std::size_t c = 0; c < field.channels(); ++c) {
    const auto plane = field.plane(c);
    double acc = 0.0;
    for (int k = 0; k < 4; ++k) {
      if (tap.index[k] >= 0) acc += tap.weight[k] * plane[static_cast<std::size_t>(tap.index[k])];
    }
    out[c] = acc;
  }
  return out;
}

std::vector<double> linear_apply(const LinearParams& params, std::span<const double> input) {
  params.validate();
  if (input.size() != params.in_dim) {
    throw InvalidInput("linear_apply: input length " + std::to_string(input.size()) +
                       " != in_dim " + std::to_string(params.in_dim));
  }
  std::vector<double> out(params.bias);
  for (std::size_t o = 0; o < params.out_dim; ++o) {
    const double* row = params.weight.data() + o * params.in_dim;
    double acc = 0.0;
    for (std::size_t i = 0; i < params.in_dim; ++i) acc += row[i] * input[i];
    out[o] += acc;
  }
  return out;
}

std::vector<double> activation(Activation kind, std::span<const double> input) {
  if (input.empty()) throw InvalidInput("activation: empty input");
  std::vector<double> out(input.begin(), input.end());
  switch (kind) {
    case Activation::relu:
      for (double& v : out) v = std::max(v, 0.0);
      break;
    case Activation::sigmoid:
      for (double& v : out) v = 1.0 / (1.0 + std::exp(-v));
      break;
    case Activation::tanh:
      for (double& v : out) v = std::tanh(v);
      break;
    case Activation::softmax: {
      const double peak = *std::max_element(out.begin(), out.end());
      double total = 0.0;
      for (double& v : out) {
        v = std::exp(v - peak);
        total += v;
      }
      for (double& v : out) v /= total;
      break;
    }
  }
  return out;
}

}  // namespace bpdo
