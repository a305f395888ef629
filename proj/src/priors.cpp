#include "bpdo/priors.hpp"

#include <algorithm>
#include <cmath>

#include "bpdo/error.hpp"

namespace bpdo {

LabeledPriors make_labeled_priors(std::span<const Polygon> polygons, std::size_t rows,
                                  std::size_t cols) {
  if (rows == 0 || cols == 0) throw InvalidInput("make_prior_maps: empty grid");
  LabeledPriors out{{TensorField(1, rows, cols), TensorField(1, rows, cols),
                     TensorField(1, rows, cols), TensorField(1, rows, cols)},
                    std::vector<int>(rows * cols, -1)};
  PriorMaps& maps = out.maps;
  for (std::size_t idx = 0; idx < polygons.size(); ++idx) {
    const BinaryMask mask = rasterize(polygons[idx], rows, cols);
    if (mask.count() == 0) continue;
    const auto sq = squared_distance_transform(mask);
    const std::int64_t peak_sq = *std::max_element(sq.begin(), sq.end());
    // Instance distances are at least 1 cell, so the max(.., 1) guard only
    // matters for hand-built masks.
    const double norm = std::max(std::sqrt(static_cast<double>(peak_sq)), 1.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        if (!mask[i] || out.instance[i] >= 0) continue;
        const auto nearest = point_to_nearest_boundary(
            mask, Cell{static_cast<std::int64_t>(r), static_cast<std::int64_t>(c)});
        out.instance[i] = static_cast<int>(idx);
        maps.cls.at(0, r, c) = 1.0;
        maps.dist.at(0, r, c) = nearest.distance / norm;
        maps.dir_x.at(0, r, c) = nearest.direction.x;
        maps.dir_y.at(0, r, c) = nearest.direction.y;
      }
    }
  }
  return out;
}

PriorMaps make_prior_maps(std::span<const Polygon> polygons, std::size_t rows, std::size_t cols) {
  return make_labeled_priors(polygons, rows, cols).maps;
}

BinaryMask binarize_distance(const TensorField& dist, double theta) {
  if (!(theta > 0.0 && theta < 1.0)) throw InvalidInput("binarize_distance: theta must lie in (0, 1)");
  if (dist.channels() != 1) throw InvalidInput("binarize_distance: expected a one-channel field");
  BinaryMask mask(dist.rows(), dist.cols());
  for (std::size_t r = 0; r < dist.rows(); ++r) {
    for (std::size_t c = 0; c < dist.cols(); ++c) {
      if (dist.at(0, r, c) > theta) mask.set(r, c);
    }
  }
  return mask;
}

}  // namespace bpdo
