#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>

namespace bpdo::detail {

// The four neighbors of a fractional location, ordered
// (x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1). Neighbors outside
// the grid carry index -1 and act as zero.
struct BilinearTap {
  std::array<std::int64_t, 4> index{-1, -1, -1, -1};
  std::array<double, 4> weight{0.0, 0.0, 0.0, 0.0};
  double fx = 0.0;
  double fy = 0.0;
};

inline BilinearTap bilinear_tap(double x, double y, std::size_t rows, std::size_t cols) {
  BilinearTap tap;
  const double xf = std::floor(x);
  const double yf = std::floor(y);
  tap.fx = x - xf;
  tap.fy = y - yf;
  tap.weight = {(1.0 - tap.fx) * (1.0 - tap.fy), tap.fx * (1.0 - tap.fy), (1.0 - tap.fx) * tap.fy,
                tap.fx * tap.fy};
  // Far outside the grid every neighbor is padding; avoid integer overflow.
  if (!(xf >= -1.0 && yf >= -1.0 && xf <= static_cast<double>(cols) &&
        yf <= static_cast<double>(rows))) {
    return tap;
  }
  const auto x0 = static_cast<std::int64_t>(xf);
  const auto y0 = static_cast<std::int64_t>(yf);
  const auto nr = static_cast<std::int64_t>(rows);
  const auto nc = static_cast<std::int64_t>(cols);
  for (int k = 0; k < 4; ++k) {
    const std::int64_t cx = x0 + (k & 1);
    const std::int64_t cy = y0 + (k >> 1);
    if (cx >= 0 && cy >= 0 && cx < nc && cy < nr) tap.index[k] = cy * nc + cx;
  }
  return tap;
}

}  // namespace bpdo::detail
