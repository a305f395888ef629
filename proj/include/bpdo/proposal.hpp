#pragma once

#include <cstddef>
#include <vector>

#include "bpdo/geometry.hpp"
#include "bpdo/tensors.hpp"

namespace bpdo {

struct ProposalConfig {
  double theta = 0.3;
  std::size_t min_area = 16;
  std::size_t k_points = 20;

  /// Throws InvalidInput unless 0 < theta < 1 and k_points >= 4.
  void validate() const;
};

struct Proposal {
  BoundaryPoints points;
  int label = 0;          // component label in the binarized mask
  std::size_t area = 0;   // component size in cells
  Cell seed;              // first component cell in raster order
};

/// Binarize at theta, drop components smaller than min_area, trace each
/// remaining outer contour and resample it to k_points. Components whose
/// contour has no area are skipped. Ordered by component label.
std::vector<Proposal> extract_proposals_detailed(const TensorField& dist, const ProposalConfig& cfg);

std::vector<BoundaryPoints> extract_proposals(const TensorField& dist, const ProposalConfig& cfg);

}  // namespace bpdo
