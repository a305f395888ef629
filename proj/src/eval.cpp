#include "bpdo/eval.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "bpdo/error.hpp"

namespace bpdo {

namespace {

double ratio(std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; }

double f_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

struct Box {
  double x0, y0, x1, y1;
};

Box box_of(const Polygon& p) {
  Box b{p.vertices()[0].x, p.vertices()[0].y, p.vertices()[0].x, p.vertices()[0].y};
  for (const Point2& v : p.vertices()) {
    b.x0 = std::min(b.x0, v.x);
    b.y0 = std::min(b.y0, v.y);
    b.x1 = std::max(b.x1, v.x);
    b.y1 = std::max(b.y1, v.y);
  }
  return b;
}

bool disjoint(const Box& a, const Box& b) { return a.x1 < b.x0 || b.x1 < a.x0 || a.y1 < b.y0 || b.y1 < a.y0; }

SceneEval evaluate_scene(const PredScene& pred, const GtScene& gt, double thr, std::size_t res) {
  SceneEval s;
  s.scene_id = gt.scene_id;
  const std::size_t np = pred.polygons.size(), ng = gt.polygons.size();
  auto is_dc = [&](std::size_t g) { return g < gt.dont_care.size() && gt.dont_care[g]; };

  std::vector<Box> pb, gb;
  for (const auto& p : pred.polygons) pb.push_back(box_of(p));
  for (const auto& g : gt.polygons) gb.push_back(box_of(g));
  std::vector<double> iou(np * ng, 0.0);
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t g = 0; g < ng; ++g) {
      if (!disjoint(pb[i], gb[g])) iou[i * ng + g] = polygon_iou(pred.polygons[i], gt.polygons[g], res);
    }
  }

  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t g = 0; g < ng; ++g) {
      if (!is_dc(g) && iou[i * ng + g] >= thr) pairs.emplace_back(iou[i * ng + g], i, g);
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a) < std::get<2>(b);
  });
  s.match.assign(np, -1);
  std::vector<bool> gt_used(ng, false);
  for (const auto& [v, i, g] : pairs) {
    if (s.match[i] >= 0 || gt_used[g]) continue;
    s.match[i] = static_cast<int>(g);
    gt_used[g] = true;
    ++s.n_matched;
  }
  for (std::size_t g = 0; g < ng; ++g) s.n_gt += is_dc(g) ? 0 : 1;
  for (std::size_t i = 0; i < np; ++i) {
    bool excluded = false;
    if (s.match[i] < 0) {
      for (std::size_t g = 0; g < ng && !excluded; ++g) excluded = is_dc(g) && iou[i * ng + g] >= thr;
    }
    if (!excluded) ++s.n_pred;
  }
  s.precision = ratio(s.n_matched, s.n_pred);
  s.recall = ratio(s.n_matched, s.n_gt);
  s.f_measure = f_of(s.precision, s.recall);
  return s;
}

}  // namespace

EvalReport evaluate(std::span<const PredScene> preds, std::span<const GtScene> gts, double thr, std::size_t res) {
  std::map<std::string, const PredScene*> by_id;
  for (const auto& p : preds) {
    if (!by_id.emplace(p.scene_id, &p).second) throw InvalidInput("evaluate: duplicate prediction scene '" + p.scene_id + "'");
  }
  if (by_id.size() != gts.size()) {
    throw InvalidInput("evaluate: " + std::to_string(preds.size()) + " prediction scenes vs " +
                       std::to_string(gts.size()) + " ground-truth scenes");
  }
  EvalReport r;
  r.iou_threshold = thr;
  for (const auto& g : gts) {
    const auto it = by_id.find(g.scene_id);
    if (it == by_id.end()) throw InvalidInput("evaluate: no predictions for scene '" + g.scene_id + "'");
    SceneEval s = evaluate_scene(*it->second, g, thr, res);
    r.n_gt += s.n_gt;
    r.n_pred += s.n_pred;
    r.n_matched += s.n_matched;
    r.per_scene.push_back(std::move(s));
  }
  r.precision = ratio(r.n_matched, r.n_pred);
  r.recall = ratio(r.n_matched, r.n_gt);
  r.f_measure = f_of(r.precision, r.recall);
  return r;
}

double boundary_error(const BoundaryPoints& pred, const Polygon& gt) {
  if (pred.k() == 0) throw InvalidInput("boundary_error: no points");
  double sum = 0.0;
  for (const Point2& p : pred.points()) sum += distance_to_boundary(gt, p);
  return sum / static_cast<double>(pred.k());
}

void to_json(nlohmann::json& j, const SceneEval& s) {
  j = {{"scene_id", s.scene_id}, {"n_gt", s.n_gt},           {"n_pred", s.n_pred},
       {"n_matched", s.n_matched}, {"precision", s.precision}, {"recall", s.recall},
       {"f_measure", s.f_measure}, {"match", s.match}};
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"precision", r.precision}, {"recall", r.recall},
       {"f_measure", r.f_measure}, {"n_gt", r.n_gt},
       {"n_pred", r.n_pred},       {"n_matched", r.n_matched},
       {"iou_threshold", r.iou_threshold}, {"per_scene", r.per_scene}};
}

}  // namespace bpdo
