#include "bpdo/proposal.hpp"

#include "bpdo/error.hpp"
#include "bpdo/priors.hpp"

namespace bpdo {

void ProposalConfig::validate() const {
  if (!(theta > 0.0 && theta < 1.0)) throw InvalidInput("ProposalConfig: theta must be in (0, 1)");
  if (k_points < 4) throw InvalidInput("ProposalConfig: k_points must be at least 4");
}

std::vector<Proposal> extract_proposals_detailed(const TensorField& dist, const ProposalConfig& cfg) {
  cfg.validate();
  if (dist.channels() != 1) throw InvalidInput("extract_proposals: distance map must have one channel");
  const BinaryMask core = binarize_distance(dist, cfg.theta);
  const LabelGrid labels = connected_components(core);

  std::vector<std::size_t> area(static_cast<std::size_t>(labels.count) + 1, 0);
  std::vector<Cell> seed(area.size(), Cell{-1, -1});
  for (std::size_t r = 0; r < labels.rows; ++r) {
    for (std::size_t c = 0; c < labels.cols; ++c) {
      const int id = labels.at(r, c);
      if (id == 0) continue;
      auto& a = area[static_cast<std::size_t>(id)];
      if (a++ == 0) seed[static_cast<std::size_t>(id)] = {static_cast<std::int64_t>(r), static_cast<std::int64_t>(c)};
    }
  }

  std::vector<Proposal> out;
  for (int id = 1; id <= labels.count; ++id) {
    const auto i = static_cast<std::size_t>(id);
    if (area[i] < cfg.min_area) continue;
    try {
      const Polygon contour = trace_boundary(core, labels, id);
      out.push_back({resample_polygon(contour, cfg.k_points), id, area[i], seed[i]});
    } catch (const DegenerateComponent&) {
      // thin strands cannot seed a ring
    }
  }
  return out;
}

std::vector<BoundaryPoints> extract_proposals(const TensorField& dist, const ProposalConfig& cfg) {
  std::vector<BoundaryPoints> out;
  for (auto& p : extract_proposals_detailed(dist, cfg)) out.push_back(std::move(p.points));
  return out;
}

}  // namespace bpdo
