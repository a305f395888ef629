#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "bpdo/autodiff.hpp"
#include "bpdo/geometry.hpp"
#include "bpdo/tensors.hpp"

namespace bpdo {

struct LossWeights {
  double alpha = 1.0;
  double beta = 3.0;
  double gamma = 0.1;
  std::size_t eps_epochs = 200;
  /// Regress the distance map on background cells as well as text cells.
  bool include_background = false;

  void validate() const;
};

struct LossParts {
  double l_cls = 0.0;
  double l_dis = 0.0;
  double l_dir = 0.0;
  double l_pm = 0.0;
};

struct LossReport {
  double l_cls = 0.0;
  double l_dis = 0.0;
  double l_dir = 0.0;
  double l_pm = 0.0;
  double schedule_factor = 0.0;
  double total = 0.0;
  std::size_t epoch = 0;
};

inline constexpr double kBceClamp = 1e-7;
inline constexpr double kDirectionNormFloor = 1e-6;

/// Mean binary cross-entropy with pred clamped to [1e-7, 1 - 1e-7].
double cls_loss(const TensorField& pred_cls, const TensorField& gt_cls);

/// Mean squared error over text cells (all cells with include_background);
/// 0 when there are none.
double dis_loss(const TensorField& pred_dist, const TensorField& gt_dist, const TensorField& gt_cls,
                bool include_background = false);

/// Mean over text cells of (|p| - |g|)^2 + (1 - cos(p, g)). The angle term
/// is 1 where |p| < 1e-6.
double dir_loss(const TensorField& pred_dir_x, const TensorField& pred_dir_y, const TensorField& gt_dir_x,
                const TensorField& gt_dir_y, const TensorField& gt_cls);

struct Alignment {
  std::size_t shift = 0;
  bool reversed = false;
  double cost = 0.0;  // mean squared point distance
};

/// Best of the 2k alignments pred[i] <-> target[(shift + i) % k] (forward)
/// or target[(shift - i) mod k] (reversed). Earliest alignment wins ties,
/// forward before reversed.
Alignment best_alignment(std::span<const Point2> pred, std::span<const Point2> target);

/// Index into the target ring matched with pred[i] under `a`.
inline std::size_t aligned_index(const Alignment& a, std::size_t i, std::size_t k) {
  return a.reversed ? (a.shift + k - i % k) % k : (a.shift + i) % k;
}

/// Mean over `snapshots` of the best-alignment cost against the GT polygon
/// resampled to k points. Pass the refined states only, not the input ring.
double pm_loss(std::span<const BoundaryPoints> snapshots, const Polygon& gt_poly, std::size_t k);

/// gamma / (1 + exp((epoch - eps) / eps)), epochs counted from 0.
double schedule_factor(const LossWeights& weights, std::size_t epoch);

/// Throws InvalidInput when epoch > eps_epochs.
LossReport total_loss(const LossParts& parts, const LossWeights& weights, std::size_t epoch);

namespace ad {
/// Scalar mean BCE of pred against a constant target of the same shape.
Var bce_mean(Var pred, const Matrix& target);
/// Scalar mean of (pred - target)^2 over entries with mask != 0; 0 if none.
Var masked_mse(Var pred, const Matrix& target, const Matrix& mask);
/// pred and target are 2 x hw (x row, y row); mean over mask != 0 columns.
Var direction_loss(Var pred, const Matrix& target, const Matrix& mask);
/// Point-matching loss over rings of k consecutive rows in each snapshot.
/// targets[r] is the GT ring for ring r, or empty to leave it unsupervised.
/// Alignments are chosen per evaluation and held fixed for the gradient.
/// Mean over supervised rings and snapshots; 0 when nothing is supervised.
Var pm_loss(std::span<const Var> snapshots, std::size_t k, std::span<const std::vector<Point2>> targets);
}  // namespace ad

}  // namespace bpdo
