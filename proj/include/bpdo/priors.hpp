#pragma once

#include <span>
#include <vector>

#include "bpdo/geometry.hpp"
#include "bpdo/tensors.hpp"

namespace bpdo {

/// Ground-truth or predicted prior maps for one scene, all 1 x rows x cols.
struct PriorMaps {
  TensorField cls;    // 1 on text cells, 0 elsewhere
  TensorField dist;   // per-instance normalized distance to the boundary, in [0, 1]
  TensorField dir_x;  // unit vector toward the nearest boundary cell, 0 off text
  TensorField dir_y;
};

/// Prior maps plus the owning instance of every cell (-1 for background).
struct LabeledPriors {
  PriorMaps maps;
  std::vector<int> instance;
};

/// Rasterizes each polygon and fills the maps from its own mask. Where
/// instances overlap the lower index owns the cell.
LabeledPriors make_labeled_priors(std::span<const Polygon> polygons, std::size_t rows,
                                  std::size_t cols);

PriorMaps make_prior_maps(std::span<const Polygon> polygons, std::size_t rows, std::size_t cols);

/// True where dist > theta. Throws InvalidInput unless 0 < theta < 1.
BinaryMask binarize_distance(const TensorField& dist, double theta);

}  // namespace bpdo
