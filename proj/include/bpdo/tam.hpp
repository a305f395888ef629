#pragma once

// Text-aware fusion: channel attention and position attention reweight the
// input features, the two modulated copies are concatenated with the input
// and fused by a 1x1 convolution. A 1x1 head then predicts the four prior
// maps (cls, dist, dir_x, dir_y) from the fused features.

#include <cstddef>
#include <vector>

#include "bpdo/autodiff.hpp"
#include "bpdo/gradcheck.hpp"
#include "bpdo/tensors.hpp"

namespace bpdo {

/// Square single-channel kernel with one bias.
struct Conv2dParams {
  std::size_t k = 3;
  std::vector<double> kernel = std::vector<double>(9, 0.0);
  std::vector<double> bias = {0.0};

  friend bool operator==(const Conv2dParams&, const Conv2dParams&) = default;
};

struct TamConfig {
  std::size_t channels = 32;
  /// Hidden width of the channel branch; 0 selects channels / 2.
  std::size_t hidden = 0;
  std::size_t kernel = 3;
};

struct TamParams {
  std::size_t channels = 0;
  LinearParams ch_conv1;    // C -> hidden, relu
  LinearParams ch_conv2;    // hidden -> C, sigmoid
  Conv2dParams pos_conv;    // relu
  Conv2dParams pos_deconv;  // transposed, sigmoid
  LinearParams fuse_conv;   // 3C -> C over [rv * W_c, rv * W_p, rv]
  LinearParams head_conv;   // C -> 4

  static TamParams init(const TamConfig& config, Rng& rng);
  void validate() const;
  std::vector<ParamRef> refs();

  friend bool operator==(const TamParams&, const TamParams&) = default;
};

struct TamOutput {
  TensorField f_tam;      // C channels
  TensorField predicted;  // 4 channels: sigmoid cls/dist, tanh dir_x/dir_y
};

/// Per-channel weights in (0, 1).
std::vector<double> channel_attention(const TensorField& rv, const TamParams& params);
/// One-channel per-position weights in (0, 1), same grid as rv.
TensorField position_attention(const TensorField& rv, const TamParams& params);
TamOutput tam_forward(const TensorField& rv, const TamParams& params);

struct TamVars {
  ad::Var ch1_w, ch1_b, ch2_w, ch2_b;
  ad::Var pos_k, pos_b, deconv_k, deconv_b;
  ad::Var fuse_w, fuse_b, head_w, head_b;
};

TamVars bind_tam(ad::Tape& tape, const TamParams& params);

struct TamGraph {
  ad::Var channel_weights;   // 1 x C
  ad::Var position_weights;  // 1 x hw
  ad::Var f_tam;             // C x hw
  ad::Var predicted;         // 4 x hw
};

TamGraph tam_forward(ad::Var rv, ad::GridShape grid, const TamVars& vars);

namespace ad {
/// w (C x 3C) applied to [rv * wc (per row), rv * wp (per column), rv] plus b,
/// without materializing the 3C-channel concatenation.
Var tam_fuse(Var rv, Var wc, Var wp, Var w, Var b);
}  // namespace ad

}  // namespace bpdo
