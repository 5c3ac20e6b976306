#include "him/guidance.hpp"

namespace him {

Var affinity_map(const Var& k_a, const Var& b_a, const Var& f_sp,
                 const Var& w_b) {
  if (k_a.val().rank() != 2 || f_sp.val().rank() != 3 ||
      k_a.val().dim(1) != f_sp.val().dim(0))
    throw ShapeError("affinity_map: kernel width must match feature channels");
  const int n = k_a.val().dim(0);
  if (b_a.val().rank() != 2 || b_a.val().dim(0) != n || b_a.val().dim(1) != 1)
    throw ShapeError("affinity_map: bias must be (N,1)");
  const int h = f_sp.val().dim(1), w = f_sp.val().dim(2);
  if (w_b.val().rank() != 3 || w_b.val().dim(0) != 1 ||
      w_b.val().dim(1) != h || w_b.val().dim(2) != w)
    throw ShapeError("affinity_map: background weight must be (1,h,w)");

  Var flat = ops::reshape(f_sp, {k_a.val().dim(1), h * w});
  Var inst = ops::add_colvec(ops::mm(k_a, flat), ops::reshape(b_a, {n}));
  Var stacked = ops::concat0({ops::reshape(w_b, {1, h * w}), inst});
  return ops::reshape(stacked, {n + 1, 1, h, w});
}

Var guidance_embed(const Var& w_sa, const Var& f_bf, const Var& f_rep) {
  if (w_sa.val().rank() != 4 || w_sa.val().dim(1) != 1)
    throw ShapeError("guidance_embed: attention must be (N+1,1,h,w)");
  const int n = w_sa.val().dim(0) - 1;
  const int h = w_sa.val().dim(2), w = w_sa.val().dim(3);
  const int c = f_bf.val().dim(0);
  if (f_bf.val().rank() != 3 || f_bf.val().dim(1) != h || f_bf.val().dim(2) != w)
    throw ShapeError("guidance_embed: background features must be (C,h,w)");
  if (f_rep.val().rank() != 2 || f_rep.val().dim(0) != n ||
      f_rep.val().dim(1) != c)
    throw ShapeError("guidance_embed: semantics must be (N,C)");

  Var weights = ops::softmax_dim0(ops::reshape(w_sa, {n + 1, h * w}));
  Var w_bg = ops::reshape(ops::rows(weights, 0, 1), {h * w});
  Var bg_term = ops::mul_rowvec(ops::reshape(f_bf, {c, h * w}), w_bg);
  Var inst_term = ops::mm_tn(f_rep, ops::rows(weights, 1, n + 1));
  return ops::reshape(ops::add(bg_term, inst_term), {c, h, w});
}

GuidanceHead::GuidanceHead(const NetworkConfig& cfg, const std::string& name,
                           nn::ParamSet& params, Rng& rng)
    : channels_(cfg.channels) {
  const int c = cfg.channels;
  affinity_ = nn::mlp(params, name + ".affinity", rng, c, c, c + 1);
  rep_ = nn::mlp(params, name + ".rep", rng, c, c, c);
  sp_ = nn::conv_block(params, name + ".sp", rng, c, c, 3, 1,
                       cfg.group_norm_groups);
  wb_ = nn::conv2d(params, name + ".wb", rng, c, 1, 3, 1);
  bf_ = nn::conv_block(params, name + ".bf", rng, c, c, 3, 1,
                       cfg.group_norm_groups);
}

Var GuidanceHead::spatial_attention(const Var& x, const Var& f_dc) const {
  if (x.val().rank() != 2 || x.val().dim(1) != channels_)
    throw ShapeError("spatial_attention: latent codes must be (N,C)");
  Var kb = affinity_(x);
  Var k_a = ops::cols(kb, 0, channels_);
  Var b_a = ops::cols(kb, channels_, channels_ + 1);
  return affinity_map(k_a, b_a, sp_(f_dc), wb_(f_dc));
}

Var GuidanceHead::semantics_embed(const Var& x, const Var& f_dc,
                                  const Var& w_sa) const {
  return guidance_embed(w_sa, bf_(f_dc), rep_(x));
}

UnitedGuidanceNet::UnitedGuidanceNet(const NetworkConfig& cfg,
                                     nn::ParamSet& params, Rng& rng) {
  cfg.validate();
  for (int s = 0; s < cfg.guidance_heads; ++s)
    heads_.emplace_back(cfg, "guidance.h" + std::to_string(s), params, rng);
}

UnitedGuidance UnitedGuidanceNet::forward(const Var& x, const Var& f_dc) const {
  if (heads_.empty()) throw ConfigError("guidance requires at least one head");
  UnitedGuidance out;
  for (const GuidanceHead& head : heads_) {
    Var w_sa = head.spatial_attention(x, f_dc);
    out.per_head.push_back(head.semantics_embed(x, f_dc, w_sa));
  }
  out.g_all = out.per_head.size() == 1 ? out.per_head.front()
                                       : ops::concat0(out.per_head);
  return out;
}

}  // namespace him
