#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "bpdo/data_io.hpp"
#include "bpdo/error.hpp"
#include "bpdo/random.hpp"

namespace bpdo {

namespace {

using Plane = std::vector<double>;

Plane gaussian_blur(const Plane& in, std::size_t rows, std::size_t cols, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[static_cast<std::size_t>(i + radius)];
  }
  for (double& v : k) v /= sum;
  const auto R = static_cast<int>(rows), C = static_cast<int>(cols);
  Plane tmp(in.size(), 0.0), out(in.size(), 0.0);
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int cc = c + i;
        if (cc >= 0 && cc < C) acc += k[static_cast<std::size_t>(i + radius)] * in[static_cast<std::size_t>(r * C + cc)];
      }
      tmp[static_cast<std::size_t>(r * C + c)] = acc;
    }
  }
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int rr = r + i;
        if (rr >= 0 && rr < R) acc += k[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(rr * C + c)];
      }
      out[static_cast<std::size_t>(r * C + c)] = acc;
    }
  }
  return out;
}

Plane noise_plane(Rng& rng, std::size_t n) {
  Plane p(n);
  for (double& v : p) v = rng.normal();
  return p;
}

/// Grows `mask` by a Chebyshev radius.
BinaryMask dilate(const BinaryMask& mask, std::size_t radius) {
  const auto R = static_cast<std::int64_t>(mask.rows()), C = static_cast<std::int64_t>(mask.cols());
  const auto rad = static_cast<std::int64_t>(radius);
  BinaryMask rows_done(mask.rows(), mask.cols()), out(mask.rows(), mask.cols());
  for (std::int64_t r = 0; r < R; ++r) {
    for (std::int64_t c = 0; c < C; ++c) {
      if (!mask.test(r, c)) continue;
      for (std::int64_t cc = std::max<std::int64_t>(0, c - rad); cc <= std::min(C - 1, c + rad); ++cc) {
        rows_done.set(static_cast<std::size_t>(r), static_cast<std::size_t>(cc));
      }
    }
  }
  for (std::int64_t r = 0; r < R; ++r) {
    for (std::int64_t c = 0; c < C; ++c) {
      if (!rows_done.test(r, c)) continue;
      for (std::int64_t rr = std::max<std::int64_t>(0, r - rad); rr <= std::min(R - 1, r + rad); ++rr) {
        out.set(static_cast<std::size_t>(rr), static_cast<std::size_t>(c));
      }
    }
  }
  return out;
}

std::vector<Point2> ribbon(Rng& rng, std::size_t rows, std::size_t cols, const SynthOptions& o) {
  const double length = rng.uniform(o.min_length, o.max_length);
  const double half_width = rng.uniform(o.min_half_width, o.max_half_width);
  const double heading = rng.uniform(-0.6, 0.6) + (rng.uniform() < 0.25 ? std::numbers::pi / 2 : 0.0);
  const double turn = rng.uniform(-1.2, 1.2);
  const double wobble = rng.uniform(-0.25, 0.25);
  const double width_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double cx = rng.uniform(0.0, static_cast<double>(cols));
  const double cy = rng.uniform(0.0, static_cast<double>(rows));

  const std::size_t n = std::max<std::size_t>(o.centerline_samples, 3);
  constexpr int kSubsteps = 16;
  std::vector<Point2> center(n);
  std::vector<double> theta(n);
  const double ds = length / static_cast<double>((n - 1) * kSubsteps);
  auto angle_at = [&](double s) {
    const double u = s / length;
    return heading + turn * (u - 0.5) + wobble * std::sin(2.0 * std::numbers::pi * u);
  };
  Point2 p{0.0, 0.0};
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      for (int k = 0; k < kSubsteps; ++k) {
        const double a = angle_at(s + 0.5 * ds);
        p.x += ds * std::cos(a);
        p.y += ds * std::sin(a);
        s += ds;
      }
    }
    center[i] = p;
    theta[i] = angle_at(s);
  }
  // center the ribbon on (cx, cy)
  double mx = 0.0, my = 0.0;
  for (const Point2& q : center) {
    mx += q.x;
    my += q.y;
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  std::vector<Point2> left, right;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(n - 1);
    const double w = half_width * (1.0 + 0.15 * std::sin(width_phase + std::numbers::pi * u));
    const double nx = -std::sin(theta[i]), ny = std::cos(theta[i]);
    const double x = center[i].x - mx + cx, y = center[i].y - my + cy;
    left.push_back({x + w * nx, y + w * ny});
    right.push_back({x - w * nx, y - w * ny});
  }
  std::vector<Point2> ring = left;
  ring.insert(ring.end(), right.rbegin(), right.rend());
  return ring;
}

}  // namespace

TensorField synth_features(const BinaryMask& text, std::uint64_t seed, std::size_t c_channels) {
  if (c_channels == 0) throw InvalidInput("synth_features: c_channels must be positive");
  const std::size_t rows = text.rows(), cols = text.cols(), n = rows * cols;
  Rng rng(mix_seed(seed, 1));
  const Plane texture = gaussian_blur(noise_plane(rng, n), rows, cols, 1.5);
  const Plane grain = noise_plane(rng, n);
  Plane intensity(n);
  for (std::size_t i = 0; i < n; ++i) {
    intensity[i] = (text[i] ? 0.75 + 0.6 * texture[i] : 0.0) + 0.05 * grain[i];
  }

  std::vector<Plane> planes;
  planes.push_back(intensity);
  for (double sigma : {1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0}) planes.push_back(gaussian_blur(intensity, rows, cols, sigma));
  for (double sigma : {1.0, 2.0, 3.0, 4.0, 6.0, 8.0}) {
    const Plane b = gaussian_blur(intensity, rows, cols, sigma);
    Plane gx(n, 0.0), gy(n, 0.0);
    const double gain = 2.5 * sigma;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double l = c > 0 ? b[r * cols + c - 1] : 0.0;
        const double rt = c + 1 < cols ? b[r * cols + c + 1] : 0.0;
        const double u = r > 0 ? b[(r - 1) * cols + c] : 0.0;
        const double d = r + 1 < rows ? b[(r + 1) * cols + c] : 0.0;
        gx[r * cols + c] = gain * 0.5 * (rt - l);
        gy[r * cols + c] = gain * 0.5 * (d - u);
      }
    }
    planes.push_back(std::move(gx));
    planes.push_back(std::move(gy));
  }
  Plane xs(n), ys(n);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      xs[r * cols + c] = cols > 1 ? 2.0 * static_cast<double>(c) / static_cast<double>(cols - 1) - 1.0 : 0.0;
      ys[r * cols + c] = rows > 1 ? 2.0 * static_cast<double>(r) / static_cast<double>(rows - 1) - 1.0 : 0.0;
    }
  }
  planes.push_back(std::move(xs));
  planes.push_back(std::move(ys));
  while (planes.size() < c_channels) {
    Plane p = gaussian_blur(noise_plane(rng, n), rows, cols, 2.0);
    for (double& v : p) v *= 2.0;
    planes.push_back(std::move(p));
  }
  planes.resize(c_channels);

  std::vector<double> data;
  data.reserve(c_channels * n);
  for (const Plane& p : planes) data.insert(data.end(), p.begin(), p.end());
  return TensorField(c_channels, rows, cols, std::move(data));
}

SceneRecord synth_scene(std::uint64_t seed, std::size_t rows, std::size_t cols, std::size_t n_instances,
                        std::size_t c_channels, const SynthOptions& options) {
  if (rows < 64 || cols < 64) throw InvalidInput("synth_scene: rows and cols must be at least 64");
  Rng rng(mix_seed(seed, 0));
  SceneRecord scene;
  scene.id = "synth-" + std::to_string(seed);
  scene.rows = rows;
  scene.cols = cols;
  BinaryMask text(rows, cols), forbidden(rows, cols);
  const double margin = 2.0;
  for (std::size_t inst = 0; inst < n_instances; ++inst) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < options.max_attempts && !placed; ++attempt) {
      std::vector<Point2> ring = ribbon(rng, rows, cols, options);
      const bool inside = std::all_of(ring.begin(), ring.end(), [&](const Point2& p) {
        return p.x >= margin && p.y >= margin && p.x <= static_cast<double>(cols) - 1.0 - margin &&
               p.y <= static_cast<double>(rows) - 1.0 - margin;
      });
      if (!inside) continue;
      Polygon poly(std::move(ring));
      const BinaryMask m = rasterize(poly, rows, cols);
      bool clash = false;
      for (std::size_t i = 0; i < m.size() && !clash; ++i) clash = m[i] && forbidden[i];
      if (clash) continue;
      const BinaryMask grown = dilate(m, options.gap);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          if (grown.at(r, c)) forbidden.set(r, c);
          if (m.at(r, c)) text.set(r, c);
        }
      }
      scene.polygons.push_back(std::move(poly));
      scene.dont_care.push_back(false);
      placed = true;
    }
    if (!placed) {
      throw GenerationError("synth_scene: could not place instance " + std::to_string(inst + 1) + " of " +
                            std::to_string(n_instances) + " after " + std::to_string(options.max_attempts) +
                            " attempts; use fewer instances or a larger grid");
    }
  }
  scene.features = synth_features(text, seed, c_channels);
  return scene;
}

}  // namespace bpdo
