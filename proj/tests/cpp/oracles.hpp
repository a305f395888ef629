#pragma once
// Independent brute-force references used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "bpdo/geometry.hpp"
#include "bpdo/random.hpp"

namespace oracle {

// Exhaustive nearest-unset-cell search; the ring of cells just outside the
// grid counts as unset.
inline double edt_at(const bpdo::BinaryMask& m, std::int64_t r, std::int64_t c) {
  if (!m.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c))) return 0.0;
  const auto rows = static_cast<std::int64_t>(m.rows()), cols = static_cast<std::int64_t>(m.cols());
  double best = static_cast<double>(std::min({r + 1, rows - r, c + 1, cols - c}));
  best *= best;
  for (std::int64_t rr = 0; rr < rows; ++rr) {
    for (std::int64_t cc = 0; cc < cols; ++cc) {
      if (m.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc))) continue;
      const double d = static_cast<double>((rr - r) * (rr - r) + (cc - c) * (cc - c));
      best = std::min(best, d);
    }
  }
  return std::sqrt(best);
}

inline bpdo::BinaryMask random_mask(bpdo::Rng& rng, std::size_t rows, std::size_t cols, double p) {
  bpdo::BinaryMask m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m.set(r, c, rng.uniform() < p);
  return m;
}

// Blobby mask: union of random discs and rectangles.
inline bpdo::BinaryMask random_blobs(bpdo::Rng& rng, std::size_t rows, std::size_t cols) {
  bpdo::BinaryMask m(rows, cols);
  const int n = static_cast<int>(rng.integer(1, 6));
  for (int i = 0; i < n; ++i) {
    const double cy = rng.uniform(0, static_cast<double>(rows)), cx = rng.uniform(0, static_cast<double>(cols));
    const double ry = rng.uniform(1, static_cast<double>(rows) / 2), rx = rng.uniform(1, static_cast<double>(cols) / 2);
    const bool disc = rng.uniform() < 0.5;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double dy = (static_cast<double>(r) - cy) / ry, dx = (static_cast<double>(c) - cx) / rx;
        if (disc ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0) m.set(r, c);
      }
    }
  }
  return m;
}

// Flood-fill component count under 8-connectivity.
inline int component_count(const bpdo::BinaryMask& m) {
  const auto rows = static_cast<std::int64_t>(m.rows()), cols = static_cast<std::int64_t>(m.cols());
  std::vector<char> seen(m.size(), 0);
  int n = 0;
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      const auto i = static_cast<std::size_t>(r * cols + c);
      if (!m[i] || seen[i]) continue;
      ++n;
      std::vector<std::pair<std::int64_t, std::int64_t>> stack{{r, c}};
      seen[i] = 1;
      while (!stack.empty()) {
        auto [y, x] = stack.back();
        stack.pop_back();
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
          for (std::int64_t dx = -1; dx <= 1; ++dx) {
            if (!m.test(y + dy, x + dx)) continue;
            const auto j = static_cast<std::size_t>((y + dy) * cols + x + dx);
            if (seen[j]) continue;
            seen[j] = 1;
            stack.push_back({y + dy, x + dx});
          }
        }
      }
    }
  }
  return n;
}

// Minimum over every cyclic shift and both traversal directions of the mean
// squared point distance; the target index for pred i is (s + i) or (s - i).
inline double pm_brute(const std::vector<bpdo::Point2>& pred, const std::vector<bpdo::Point2>& gt) {
  const std::size_t k = pred.size();
  double best = std::numeric_limits<double>::infinity();
  for (int dir : {1, -1}) {
    for (std::size_t s = 0; s < k; ++s) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        const auto j = static_cast<std::size_t>(
            ((static_cast<std::int64_t>(s) + dir * static_cast<std::int64_t>(i)) % static_cast<std::int64_t>(k) +
             static_cast<std::int64_t>(k)) % static_cast<std::int64_t>(k));
        const double dx = pred[i].x - gt[j].x, dy = pred[i].y - gt[j].y;
        acc += dx * dx + dy * dy;
      }
      best = std::min(best, acc / static_cast<double>(k));
    }
  }
  return best;
}

inline bool point_in_polygon(const std::vector<bpdo::Point2>& v, bpdo::Point2 p) {
  bool inside = false;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    if ((v[i].y > p.y) != (v[j].y > p.y) &&
        p.x < (v[j].x - v[i].x) * (p.y - v[i].y) / (v[j].y - v[i].y) + v[i].x)
      inside = !inside;
  }
  return inside;
}

}  // namespace oracle
