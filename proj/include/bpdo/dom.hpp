#pragma once

// Iterative boundary refinement. Every point queries the fused feature field
// at its own position, predicts per-head sampling offsets, attends over the
// sampled values and moves by a bounded displacement. All points of a step
// read the same input state.

#include <cstddef>
#include <span>
#include <vector>

#include "bpdo/autodiff.hpp"
#include "bpdo/geometry.hpp"
#include "bpdo/gradcheck.hpp"
#include "bpdo/tensors.hpp"

namespace bpdo {

struct DomConfig {
  std::size_t channels = 32;
  std::size_t m_heads = 8;
  std::size_t n_samples = 3;
  /// Per-head value width; 0 selects max(1, channels / m_heads).
  std::size_t d_v = 0;
  std::size_t hidden = 64;
  double r_max = 8.0;
  std::size_t t_iters = 3;
  /// One parameter set reused by every iteration; otherwise one per iteration.
  bool share_iterations = true;

  void validate() const;
};

struct DomParams {
  std::size_t channels = 0;
  std::size_t m_heads = 0;
  std::size_t n_samples = 0;
  std::size_t d_v = 0;
  double r_max = 8.0;
  std::size_t t_iters = 1;

  std::vector<LinearParams> value_proj;   // [m]: C -> d_v
  std::vector<LinearParams> qk_weight;    // [m * n_samples + n]: C -> 1
  LinearParams head_out;                  // m * d_v -> C
  std::vector<LinearParams> offset_head;  // [m]: C -> 2 * n_samples, (dx, dy) pairs
  LinearParams update1;                   // C -> hidden, relu
  LinearParams update2;                   // hidden -> 2, tanh * r_max

  static DomParams init(const DomConfig& config, Rng& rng);
  void validate() const;
  std::vector<ParamRef> refs(const std::string& prefix = "dom");

  friend bool operator==(const DomParams&, const DomParams&) = default;
};

/// Parameter sets for the refinement iterations: one shared set, or exactly
/// t_iters sets applied in order.
std::vector<DomParams> init_dom_stages(const DomConfig& config, Rng& rng);

/// Offsets for head m, sample n at index m * n_samples + n; each component
/// is r_max * tanh(.) so |component| < r_max.
std::vector<Point2> predict_offsets(const TensorField& f_tam, Point2 p, const DomParams& params);

struct AttentionTrace {
  std::vector<double> f_da;          // C values
  std::vector<Point2> offsets;       // m * n_samples
  std::vector<double> weights;       // m * n_samples, softmax over n per head
};

AttentionTrace deformable_attention_trace(const TensorField& f_tam, Point2 p, const DomParams& params);
std::vector<double> deformable_attention(const TensorField& f_tam, Point2 p, const DomParams& params);

BoundaryPoints dom_step(const TensorField& f_tam, const BoundaryPoints& pts, const DomParams& params);

struct DomTrace {
  std::vector<BoundaryPoints> snapshots;  // input followed by one state per iteration
  const BoundaryPoints& final() const { return snapshots.back(); }
};

DomTrace dom_optimize(const TensorField& f_tam, const BoundaryPoints& proposal,
                      std::span<const DomParams> stages);
std::vector<DomTrace> dom_optimize(const TensorField& f_tam, std::span<const BoundaryPoints> proposals,
                                   std::span<const DomParams> stages);
std::vector<DomTrace> dom_optimize(const TensorField& f_tam, std::span<const BoundaryPoints> proposals,
                                   const DomParams& params);

struct DomVars {
  const DomParams* params = nullptr;
  ad::Var w_val, b_val;  // (m * d_v) x C, 1 x (m * d_v)
  ad::Var w_qk, b_qk;    // (m * n) x C
  ad::Var w_out, b_out;
  ad::Var w_off, b_off;  // (m * 2n) x C
  ad::Var w_u1, b_u1, w_u2, b_u2;
};

/// Binds the per-head parameters and stacks them into the batched layout.
DomVars bind_dom(ad::Tape& tape, const DomParams& params);

struct DomStepGraph {
  ad::Var offsets;  // (n * m * n_samples) x 2, row (i * m + h) * n_samples + s
  ad::Var weights;  // n x (m * n_samples)
  ad::Var f_da;     // n x C
  ad::Var update;   // n x 2
  ad::Var next;     // n x 2
};

/// One synchronous step for all rows of `points` (n x 2, columns x and y).
DomStepGraph dom_step(ad::Var f_tam, ad::GridShape grid, ad::Var points, const DomVars& vars);

/// Applies stages (one shared set reused t_iters times, or one per iteration)
/// and returns the point matrices after every iteration, input excluded.
std::vector<ad::Var> dom_optimize(ad::Var f_tam, ad::GridShape grid, ad::Var points,
                                  std::span<const DomVars> stages, std::size_t t_iters);

ad::Matrix points_matrix(std::span<const BoundaryPoints> rings);
std::vector<BoundaryPoints> split_points(const ad::Matrix& m, std::size_t k);

namespace ad {
/// Row r of x (rows x in) uses weight block g = (r / run) % groups of w
/// ((groups * out) x in) and b; returns rows x out.
Var grouped_affine(Var x, Var w, Var b, Index groups, Index run);
/// w: n x (groups * run) weights, v: (n * groups * run) x d values.
/// Returns n x (groups * d), out[i, g*d + j] = sum_s w[i, g*run + s] * v[(i*groups + g)*run + s, j].
Var attend(Var w, Var v, Index groups, Index run);
}  // namespace ad

}  // namespace bpdo
