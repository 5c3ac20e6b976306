#include "him/matting.hpp"

#include <cmath>

namespace him {

Var trimap_from_kernels(const Var& k, const Var& b, const Var& f_tri) {
  if (k.val().rank() != 2 || k.val().dim(0) % 3 != 0 ||
      f_tri.val().rank() != 3 || k.val().dim(1) != f_tri.val().dim(0))
    throw ShapeError("trimap_from_kernels: kernels must be (3N, C_tri)");
  const int n = k.val().dim(0) / 3;
  Var half = mask_from_kernels(k, b, f_tri);  // (3N, h2, w2)
  Var full = ops::upsample_bilinear2x(half);
  return ops::reshape(full, {n, 3, full.val().dim(1), full.val().dim(2)});
}

Var alpha_from_kernels(const Var& k, const Var& b, const Var& f_alpha) {
  Var raw = mask_from_kernels(k, b, f_alpha);  // (N, H, W)
  return ops::reshape(ops::clamp01(raw),
                      {k.val().dim(0), 1, raw.val().dim(1), raw.val().dim(2)});
}

InstancePredictions fuse_alpha(const Var& alpha_pred, const Var& t_pred) {
  const Tensor& a = alpha_pred.val();
  const Tensor& t = t_pred.val();
  if (a.rank() != 4 || t.rank() != 4 || a.dim(1) != 1 || t.dim(1) != 3 ||
      a.dim(0) != t.dim(0) || a.dim(2) != t.dim(2) || a.dim(3) != t.dim(3))
    throw ShapeError("fuse_alpha: need alpha (N,1,H,W) and trimap (N,3,H,W)");
  const int n = a.dim(0), h = a.dim(2), w = a.dim(3);
  const int64_t plane = static_cast<int64_t>(h) * w;

  InstancePredictions out;
  out.trimap_logits = t_pred;
  out.alpha_pred = alpha_pred;
  out.unknown = Tensor::zeros({n, 1, h, w});
  out.foreground = Tensor::zeros({n, 1, h, w});
  for (int i = 0; i < n; ++i) {
    const double* logits = t.data() + static_cast<int64_t>(i) * 3 * plane;
    for (int64_t px = 0; px < plane; ++px) {
      int best = 0;
      for (int c = 1; c < 3; ++c)
        if (logits[c * plane + px] > logits[best * plane + px]) best = c;
      if (best == 1) out.unknown[i * plane + px] = 1.0;
      if (best == 2) out.foreground[i * plane + px] = 1.0;
    }
  }
  out.alpha_fin =
      ops::add_const(ops::mul_const(alpha_pred, out.unknown), out.foreground);
  return out;
}

std::vector<SelectedInstance> select_instances(const Tensor& class_logits,
                                               const Tensor& alpha_fin,
                                               double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ConfigError("selection threshold must lie strictly inside (0,1)");
  if (class_logits.rank() != 2 || class_logits.dim(1) != 2 ||
      alpha_fin.rank() != 4 || alpha_fin.dim(0) != class_logits.dim(0) ||
      alpha_fin.dim(1) != 1)
    throw ShapeError("select_instances: need logits (N,2) and mattes (N,1,H,W)");
  const int n = class_logits.dim(0);
  const int h = alpha_fin.dim(2), w = alpha_fin.dim(3);
  const int64_t plane = static_cast<int64_t>(h) * w;

  std::vector<SelectedInstance> kept;
  for (int i = 0; i < n; ++i) {
    // softmax over two logits, stable form
    const double z0 = class_logits.at(i, 0), z1 = class_logits.at(i, 1);
    const double m = std::max(z0, z1);
    const double p = std::exp(z1 - m) / (std::exp(z0 - m) + std::exp(z1 - m));
    if (p < threshold) continue;
    SelectedInstance inst;
    inst.query = i;
    inst.confidence = p;
    inst.alpha = Tensor::zeros({h, w});
    const double* src = alpha_fin.data() + static_cast<int64_t>(i) * plane;
    for (int64_t px = 0; px < plane; ++px) inst.alpha[px] = src[px];
    kept.push_back(std::move(inst));
  }
  return kept;
}

MattingNet::MattingNet(const NetworkConfig& cfg, nn::ParamSet& params,
                       Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.channels, cf = cfg_.matting_channels;
  const int g = cfg_.group_norm_groups;
  const int fused_in = 2 * c + cfg_.guidance_heads * c;
  in_ = nn::conv_block(params, "matting.in", rng, fused_in, cf, 3, 1, g);
  down1_ = nn::conv_block(params, "matting.down1", rng, cf, 2 * cf, 3, 2, g);
  down2_ = nn::conv_block(params, "matting.down2", rng, 2 * cf, 4 * cf, 3, 2, g);
  down3_ = nn::conv_block(params, "matting.down3", rng, 4 * cf, 8 * cf, 3, 2, g);
  up2_ = nn::conv_block(params, "matting.up2", rng, 12 * cf, 4 * cf, 3, 1, g);
  up1_ = nn::conv_block(params, "matting.up1", rng, 6 * cf, 2 * cf, 3, 1, g);
  up0_ = nn::conv_block(params, "matting.up0", rng, 3 * cf, cf, 3, 1, g);
  skip4_ = nn::conv_block(params, "matting.skip4", rng, cf + cfg_.stem_channels,
                          cf, 3, 1, g);
  r2_ = nn::conv_block(params, "matting.r2", rng, cf, cf, 3, 1, g);
  r1_ = nn::conv_block(params, "matting.r1", rng, cf, cf, 3, 1, g);
  tri_head_ = nn::conv_block(params, "matting.tri_head", rng, cf,
                             cfg_.trimap_channels, 3, 1, g);
  alpha_head_ = nn::conv_block(params, "matting.alpha_head", rng, cf,
                               cfg_.alpha_channels, 3, 1, g);
  k_tri_ = nn::mlp(params, "matting.k_tri", rng, c, c,
                   3 * cfg_.trimap_channels);
  b_tri_ = nn::mlp(params, "matting.b_tri", rng, c, c, 3);
  k_alpha_ = nn::mlp(params, "matting.k_alpha", rng, c, c,
                     cfg_.alpha_channels);
  b_alpha_ = nn::mlp(params, "matting.b_alpha", rng, c, c, 1);
}

Var MattingNet::fuse(const Var& backbone, const Var& g_all) const {
  const int c = cfg_.channels;
  if (backbone.val().rank() != 3 || backbone.val().dim(0) != 2 * c)
    throw ShapeError("fuse: backbone features must have 2C channels");
  if (g_all.val().rank() != 3 ||
      g_all.val().dim(0) != cfg_.guidance_heads * c)
    throw ShapeError("fuse: guidance must have S*C channels");
  if (g_all.val().dim(1) != 2 * backbone.val().dim(1) ||
      g_all.val().dim(2) != 2 * backbone.val().dim(2))
    throw ShapeError("fuse: guidance must sit at stride 8");

  Var x = ops::concat0({ops::upsample_bilinear2x(backbone), g_all});
  Var e0 = in_(x);
  Var e1 = down1_(e0);
  Var e2 = down2_(e1);
  Var e3 = down3_(e2);
  // Odd grids halve by ceiling, so each upsampled map is cropped to its
  // skip's exact size before the concat.
  auto up_to = [](const Var& v, const Var& skip) {
    return ops::crop2d(ops::upsample_nearest2x(v), skip.val().dim(1),
                       skip.val().dim(2));
  };
  Var u2 = up2_(ops::concat0({up_to(e3, e2), e2}));
  Var u1 = up1_(ops::concat0({up_to(u2, e1), e1}));
  return up0_(ops::concat0({up_to(u1, e0), e0}));
}

MattingFeatures MattingNet::refine(const Var& fused, const Var& stem) const {
  if (stem.val().rank() != 3 || stem.val().dim(0) != cfg_.stem_channels)
    throw ShapeError("refine: stem features must have stem_channels");
  if (stem.val().dim(1) != 2 * fused.val().dim(1) ||
      stem.val().dim(2) != 2 * fused.val().dim(2))
    throw ShapeError("refine: stem must sit at stride 4");
  Var r4 = skip4_(ops::concat0({ops::upsample_bilinear2x(fused), stem}));
  Var half = r2_(ops::upsample_bilinear2x(r4));
  MattingFeatures out;
  out.f_tri = tri_head_(half);
  Var full = r1_(ops::upsample_bilinear2x(half));
  out.f_alpha = alpha_head_(full);
  return out;
}

Var MattingNet::decode_trimaps(const Var& x, const Var& f_tri) const {
  if (x.val().rank() != 2 || x.val().dim(1) != cfg_.channels)
    throw ShapeError("decode_trimaps: latent codes must be (N,C)");
  const int n = x.val().dim(0);
  Var k = ops::reshape(k_tri_(x), {3 * n, cfg_.trimap_channels});
  Var b = ops::reshape(b_tri_(x), {3 * n, 1});
  return trimap_from_kernels(k, b, f_tri);
}

Var MattingNet::decode_boundary_alpha(const Var& x, const Var& f_alpha) const {
  if (x.val().rank() != 2 || x.val().dim(1) != cfg_.channels)
    throw ShapeError("decode_boundary_alpha: latent codes must be (N,C)");
  return alpha_from_kernels(k_alpha_(x), b_alpha_(x), f_alpha);
}

}  // namespace him
