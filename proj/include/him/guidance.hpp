#pragma once

#include <string>
#include <vector>

#include "him/perception.hpp"

namespace him {

// W_sa = concat(w_b, Conv1x1(f_sp, k_a) + broadcast(b_a)) over the instance
// axis: k_a (N,C), b_a (N,1), f_sp (C,h,w), w_b (1,h,w) -> (N+1,1,h,w).
// Channel 0 is the background weight.
Var affinity_map(const Var& k_a, const Var& b_a, const Var& f_sp,
                 const Var& w_b);

// G = sum over the N+1 axis of softmax(W_sa, axis 0) * candidates, where the
// background candidate is the pixel vector of f_bf (C,h,w) and candidate k>=1
// broadcasts row k-1 of f_rep (N,C). Output (C,h,w).
Var guidance_embed(const Var& w_sa, const Var& f_bf, const Var& f_rep);

// One guidance head: independent CNNs on the detailed context features and
// MLPs on the latent codes.
class GuidanceHead {
 public:
  GuidanceHead() = default;
  GuidanceHead(const NetworkConfig& cfg, const std::string& name,
               nn::ParamSet& params, Rng& rng);

  // x (N,C) latent codes, f_dc (C,h,w) -> spatial attention (N+1,1,h,w)
  Var spatial_attention(const Var& x, const Var& f_dc) const;
  // -> per-head guidance G (C,h,w)
  Var semantics_embed(const Var& x, const Var& f_dc, const Var& w_sa) const;

 private:
  int channels_ = 0;
  nn::Mlp affinity_;  // emits (N, C+1): kernel k_a and bias b_a
  nn::Mlp rep_;       // emits F_rep (N, C)
  nn::ConvBlock sp_;  // F_sp source
  nn::Conv2d wb_;     // background weight source
  nn::ConvBlock bf_;  // background feature source
};

struct UnitedGuidance {
  Var g_all;                 // (S*C, h, w)
  std::vector<Var> per_head; // each (C, h, w)
};

class UnitedGuidanceNet {
 public:
  UnitedGuidanceNet(const NetworkConfig& cfg, nn::ParamSet& params, Rng& rng);

  UnitedGuidance forward(const Var& x, const Var& f_dc) const;
  const std::vector<GuidanceHead>& heads() const { return heads_; }

 private:
  std::vector<GuidanceHead> heads_;
};

}  // namespace him
