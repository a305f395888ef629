#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bpdo/geometry.hpp"

namespace bpdo {

struct GtScene {
  std::string scene_id;
  std::vector<Polygon> polygons;
  std::vector<bool> dont_care;  // parallel to polygons; missing entries are false
};

struct PredScene {
  std::string scene_id;
  std::vector<Polygon> polygons;
};

struct SceneEval {
  std::string scene_id;
  std::size_t n_gt = 0;       // excluding do-not-care
  std::size_t n_pred = 0;     // excluding predictions that only hit do-not-care regions
  std::size_t n_matched = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  std::vector<int> match;     // per prediction: matched GT index or -1
};

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  std::size_t n_gt = 0;
  std::size_t n_pred = 0;
  std::size_t n_matched = 0;
  double iou_threshold = 0.5;
  std::vector<SceneEval> per_scene;
};

/// Greedy one-to-one matching per scene in descending IoU order (ties: lower
/// prediction index, then lower GT index) against the non-do-not-care GT.
/// Unmatched predictions with IoU >= threshold against a do-not-care GT are
/// left out of the counts. Counts are summed over scenes. Scenes are paired
/// by id; both lists must contain the same ids. Report order follows `gts`.
EvalReport evaluate(std::span<const PredScene> preds, std::span<const GtScene> gts, double iou_threshold = 0.5,
                    std::size_t iou_resolution = 512);

/// Mean distance from each point to the nearest edge of `gt`.
double boundary_error(const BoundaryPoints& pred, const Polygon& gt);

void to_json(nlohmann::json& j, const SceneEval& s);
void to_json(nlohmann::json& j, const EvalReport& r);

}  // namespace bpdo
