#pragma once

#include <vector>

#include "him/guidance.hpp"
#include "him/perception.hpp"

namespace him {

struct MattingFeatures {
  Var f_alpha;  // (C_alpha, H, W)
  Var f_tri;    // (C_tri, H/2, W/2)
};

struct InstancePredictions {
  Var trimap_logits;  // (N, 3, H, W), channel order BG / UNK / FG
  Var alpha_pred;     // (N, 1, H, W), boundary alpha, clamped to [0,1]
  Var alpha_fin;      // (N, 1, H, W)
  Tensor unknown;     // (N, 1, H, W) 0/1, argmax == UNK
  Tensor foreground;  // (N, 1, H, W) 0/1, argmax == FG
};

struct SelectedInstance {
  int query = -1;
  double confidence = 0.0;  // softmax human probability
  Tensor alpha;             // (H, W)
};

// Dynamic 1x1 trimap decoding: k (N*3, C_tri), b (N*3, 1), f_tri
// (C_tri, h2, w2) -> bilinear x2 -> (N, 3, 2*h2, 2*w2).
Var trimap_from_kernels(const Var& k, const Var& b, const Var& f_tri);

// Dynamic 1x1 alpha decoding with a hard [0,1] clamp: k (N, C_alpha),
// b (N, 1), f_alpha (C_alpha, H, W) -> (N, 1, H, W).
Var alpha_from_kernels(const Var& k, const Var& b, const Var& f_alpha);

// Per-pixel trimap fusion: argmax over the 3 channels (ties take the lowest
// channel index) partitions pixels into BG/UNK/FG; the final matte is 1 on
// FG, 0 on BG and the boundary alpha on UNK.
InstancePredictions fuse_alpha(const Var& alpha_pred, const Var& t_pred);

// Keep queries whose softmax human probability is >= threshold (ties kept).
// Threshold must lie strictly inside (0,1); throws ConfigError otherwise.
std::vector<SelectedInstance> select_instances(const Tensor& class_logits,
                                               const Tensor& alpha_fin,
                                               double threshold = 0.5);

// Matting network: U-Net fusion of backbone features with the united
// guidance, progressive refinement to full resolution with stem skips, and
// per-query dynamic decoders.
class MattingNet {
 public:
  MattingNet(const NetworkConfig& cfg, nn::ParamSet& params, Rng& rng);

  // backbone (2C, H/16, W/16), g_all (S*C, H/8, W/8) -> (C_f, H/8, W/8)
  Var fuse(const Var& backbone, const Var& g_all) const;
  // stem (stem_channels, H/4, W/4) from the encoder
  MattingFeatures refine(const Var& fused, const Var& stem) const;
  Var decode_trimaps(const Var& x, const Var& f_tri) const;
  Var decode_boundary_alpha(const Var& x, const Var& f_alpha) const;

 private:
  NetworkConfig cfg_;
  nn::ConvBlock in_, down1_, down2_, down3_, up2_, up1_, up0_;
  nn::ConvBlock skip4_, r2_, r1_, tri_head_, alpha_head_;
  nn::Mlp k_tri_, b_tri_, k_alpha_, b_alpha_;
};

}  // namespace him
