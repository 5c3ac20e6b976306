#include "him/perception.hpp"

#include <cmath>

namespace him {

void NetworkConfig::validate() const {
  auto bad = [](const std::string& what) { throw ConfigError(what); };
  if (channels < 4 || channels % 4 != 0)
    bad("channels must be a positive multiple of 4");
  if (heads < 1 || channels % heads != 0)
    bad("channels must be divisible by heads");
  if (queries < 1) bad("queries must be at least 1");
  if (encoder_layers < 1) bad("encoder_layers must be at least 1");
  if (decoder_layers < 1) bad("decoder_layers must be at least 1");
  if (group_norm_groups < 1) bad("group_norm_groups must be at least 1");
  if (stem_channels < 1) bad("stem_channels must be at least 1");
  if (ffn_mult < 1) bad("ffn_mult must be at least 1");
  if (guidance_heads < 1) bad("guidance_heads must be at least 1");
  if (matting_channels < 1) bad("matting_channels must be at least 1");
  if (alpha_channels < 1) bad("alpha_channels must be at least 1");
  if (trimap_channels < 1) bad("trimap_channels must be at least 1");
  for (int c : {channels, stem_channels, matting_channels, alpha_channels,
                trimap_channels})
    if (c % group_norm_groups != 0)
      bad("all channel widths must be divisible by group_norm_groups");
  if (backbone != "toy-residual")
    bad("unknown backbone identifier: " + backbone);
}

Var mask_from_kernels(const Var& k, const Var& b, const Var& f_dc) {
  if (k.val().rank() != 2 || f_dc.val().rank() != 3 ||
      k.val().dim(1) != f_dc.val().dim(0))
    throw ShapeError("mask_from_kernels: kernel width must match feature channels");
  if (b.val().rank() != 2 || b.val().dim(0) != k.val().dim(0) ||
      b.val().dim(1) != 1)
    throw ShapeError("mask_from_kernels: bias must be (N,1)");
  const int c = f_dc.val().dim(0);
  const int h = f_dc.val().dim(1), w = f_dc.val().dim(2);
  Var flat = ops::reshape(f_dc, {c, h * w});
  Var m = ops::add_colvec(ops::mm(k, flat), ops::reshape(b, {k.val().dim(0)}));
  return ops::reshape(m, {k.val().dim(0), h, w});
}

PerceptionNet::Stage PerceptionNet::make_stage(const std::string& name,
                                               nn::ParamSet& ps, Rng& rng,
                                               int ci, int co) const {
  Stage s;
  s.conv1 = nn::conv2d(ps, name + ".c1", rng, ci, co, 3, 2);
  s.gn1 = nn::group_norm(ps, name + ".gn1", co, cfg_.group_norm_groups);
  s.conv2 = nn::conv2d(ps, name + ".c2", rng, co, co, 3, 1);
  s.gn2 = nn::group_norm(ps, name + ".gn2", co, cfg_.group_norm_groups);
  s.skip = nn::conv2d(ps, name + ".skip", rng, ci, co, 1, 2, 0);
  return s;
}

Var PerceptionNet::stage_forward(const Stage& s, const Var& x) const {
  Var y = ops::gelu(s.gn1(s.conv1(x)));
  y = s.gn2(s.conv2(y));
  return ops::gelu(ops::add(y, s.skip(x)));
}

PerceptionNet::PerceptionNet(const NetworkConfig& cfg, nn::ParamSet& params,
                             Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const int cs = cfg_.stem_channels, c = cfg_.channels;
  const int g = cfg_.group_norm_groups, ffn = cfg_.ffn_mult * c;
  stem1_ = nn::conv_block(params, "perception.stem1", rng, 3, cs, 3, 2, g);
  stem2_ = nn::conv_block(params, "perception.stem2", rng, cs, cs, 3, 1, g);
  stem3_ = nn::conv_block(params, "perception.stem3", rng, cs, cs, 3, 2, g);
  stage1_ = make_stage("perception.stage1", params, rng, cs, c);
  stage2_ = make_stage("perception.stage2", params, rng, c, 2 * c);
  proj_ = nn::conv2d(params, "perception.proj", rng, 2 * c, c, 1, 1, 0);
  for (int i = 0; i < cfg_.encoder_layers; ++i)
    encoder_.push_back(nn::encoder_layer(
        params, "perception.enc" + std::to_string(i), rng, c, cfg_.heads, ffn));
  // Unit-scale init keeps the queries distinct from step one; tighter scales
  // leave them near-identical after LayerNorm and matching never settles.
  query_embed_ = params.add("perception.query_embed",
                            nn::normal_init(rng, {cfg_.queries, c}, 1.0));
  for (int i = 0; i < cfg_.decoder_layers; ++i)
    decoder_.push_back(nn::decoder_layer(
        params, "perception.dec" + std::to_string(i), rng, c, cfg_.heads, ffn));
  dec_norm_ = nn::layer_norm(params, "perception.dec_norm", c);
  fuse1_ = nn::conv_block(params, "perception.fuse1", rng, 2 * c, c, 3, 1, g);
  fuse2_ = nn::conv_block(params, "perception.fuse2", rng, c, c, 3, 1, g);
  k_seg_ = nn::mlp(params, "perception.k_seg", rng, c, c, c);
  b_seg_ = nn::mlp(params, "perception.b_seg", rng, c, c, 1);
  cls_ = nn::mlp(params, "perception.cls", rng, c, c, 2);
}

EncoderFeatures PerceptionNet::encode(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw ShapeError("encode: image must be (3,H,W)");
  const int h = image.dim(1), w = image.dim(2);
  if (h % 16 != 0 || w % 16 != 0 || h < 16 || w < 16)
    throw ShapeError("encode: H and W must be positive multiples of 16");

  EncoderFeatures f;
  Var img(image);
  f.stem = stem3_(stem2_(stem1_(img)));
  f.backbone8 = stage_forward(stage1_, f.stem);
  f.backbone = stage_forward(stage2_, f.backbone8);

  Var ctx = proj_(f.backbone);
  const int h16 = h / 16, w16 = w / 16;
  f.pos = nn::sine_position_embedding(cfg_.channels, h16, w16);
  Var tokens = ops::transpose(ops::reshape(ctx, {cfg_.channels, h16 * w16}));
  for (const auto& layer : encoder_) tokens = layer(tokens, f.pos);
  f.context = ops::reshape(ops::transpose(tokens), {cfg_.channels, h16, w16});
  return f;
}

Var PerceptionNet::decode_queries_from(const Var& memory,
                                       const Tensor& mem_pos) const {
  if (memory.val().rank() != 2 || memory.val().dim(1) != cfg_.channels)
    throw ShapeError("decode_queries: memory must be (P,C)");
  Var x(Tensor::zeros({cfg_.queries, cfg_.channels}));
  for (const auto& layer : decoder_)
    x = layer(x, query_embed_, memory, mem_pos);
  return dec_norm_(x);
}

LatentCodes PerceptionNet::decode_queries(const EncoderFeatures& feats) const {
  const int h16 = feats.context.val().dim(1), w16 = feats.context.val().dim(2);
  Var memory = ops::transpose(
      ops::reshape(feats.context, {cfg_.channels, h16 * w16}));
  return {decode_queries_from(memory, feats.pos), query_embed_};
}

Var PerceptionNet::feature_decode(const EncoderFeatures& feats) const {
  Var up = ops::upsample_bilinear2x(feats.context);
  Var cat = ops::concat0({feats.backbone8, up});
  return fuse2_(fuse1_(cat));
}

AuxOutputs PerceptionNet::aux_heads(const Var& x, const Var& f_dc) const {
  if (x.val().rank() != 2 || x.val().dim(1) != cfg_.channels)
    throw ShapeError("aux_heads: latent codes must be (N,C)");
  AuxOutputs out;
  out.mask_logits = mask_from_kernels(k_seg_(x), b_seg_(x), f_dc);
  out.class_logits = cls_(x);
  return out;
}

}  // namespace him
