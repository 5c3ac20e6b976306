#pragma once

#include <string>
#include <vector>

#include "him/nn.hpp"

namespace him {

// Shared architecture knobs for the full network. Defaults are the desk-scale
// configuration; the published-scale preset lives in the run config layer.
struct NetworkConfig {
  int channels = 64;          // context width C
  int queries = 20;           // query count N
  int encoder_layers = 2;
  int decoder_layers = 6;
  int heads = 4;              // attention heads
  std::string backbone = "toy-residual";
  int group_norm_groups = 8;
  int stem_channels = 32;
  int guidance_heads = 2;     // united guidance head count S
  int matting_channels = 32;  // fusion network base width
  int alpha_channels = 16;    // boundary alpha feature width
  int trimap_channels = 32;   // trimap feature width
  int ffn_mult = 4;           // transformer feed-forward multiplier

  void validate() const;  // throws ConfigError
};

// Multi-scale outputs of the semantic encoder.
struct EncoderFeatures {
  Var stem;       // (stem_channels, H/4, W/4)
  Var backbone8;  // (C, H/8, W/8), intermediate backbone stage
  Var backbone;   // (2C, H/16, W/16)
  Var context;    // F_c (C, H/16, W/16), transformer-refined
  Tensor pos;     // (H/16 * W/16, C) sinusoidal grid for cross-attention keys
};

struct LatentCodes {
  Var x;                // (N, C) instance latent codes
  Var query_embedding;  // (N, C) learned query embedding
};

struct AuxOutputs {
  Var mask_logits;   // (N, H/8, W/8) instance mask logits
  Var class_logits;  // (N, 2) background / human logits, column 1 = human
};

// mask[i] = sum_c k[i,c] * f_dc[c,:,:] + b[i]; k (N,C), b (N,1), f_dc (C,h,w)
Var mask_from_kernels(const Var& k, const Var& b, const Var& f_dc);

// CNN-transformer perception network: deep stem, residual backbone with a
// stride schedule of 4/8/16, transformer encoder over the stride-16 grid, and
// a query decoder that emits per-instance latent codes.
class PerceptionNet {
 public:
  PerceptionNet(const NetworkConfig& cfg, nn::ParamSet& params, Rng& rng);

  // Image (3,H,W) with H, W divisible by 16; throws ShapeError otherwise.
  EncoderFeatures encode(const Tensor& image) const;
  LatentCodes decode_queries(const EncoderFeatures& feats) const;
  // Raw form for callers that build the token memory themselves.
  Var decode_queries_from(const Var& memory, const Tensor& mem_pos) const;
  // Detailed context features F_dc (C, H/8, W/8).
  Var feature_decode(const EncoderFeatures& feats) const;
  AuxOutputs aux_heads(const Var& x, const Var& f_dc) const;

  const NetworkConfig& config() const { return cfg_; }

 private:
  struct Stage {
    nn::Conv2d conv1, conv2, skip;
    nn::GroupNorm gn1, gn2;
  };
  Stage make_stage(const std::string& name, nn::ParamSet& ps, Rng& rng, int ci,
                   int co) const;
  Var stage_forward(const Stage& s, const Var& x) const;

  NetworkConfig cfg_;
  nn::ConvBlock stem1_, stem2_, stem3_;
  Stage stage1_, stage2_;
  nn::Conv2d proj_;
  std::vector<nn::EncoderLayer> encoder_;
  Var query_embed_;
  std::vector<nn::DecoderLayer> decoder_;
  nn::LayerNorm dec_norm_;
  nn::ConvBlock fuse1_, fuse2_;
  nn::Mlp k_seg_, b_seg_, cls_;
};

}  // namespace him
