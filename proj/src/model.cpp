#include "him/model.hpp"

namespace him {

E2EHim::E2EHim(const NetworkConfig& cfg, uint64_t init_seed)
    : E2EHim(cfg, Rng(init_seed)) {}

E2EHim::E2EHim(const NetworkConfig& cfg, Rng rng)
    : cfg_(cfg),
      perception_(cfg_, params_, rng),
      guidance_(cfg_, params_, rng),
      matting_(cfg_, params_, rng) {}

ModelOutputs E2EHim::forward(const Tensor& image) const {
  ModelOutputs out;
  out.features = perception_.encode(image);
  out.latents = perception_.decode_queries(out.features);
  out.f_dc = perception_.feature_decode(out.features);
  out.aux = perception_.aux_heads(out.latents.x, out.f_dc);
  out.guidance = guidance_.forward(out.latents.x, out.f_dc);
  Var fused = matting_.fuse(out.features.backbone, out.guidance.g_all);
  out.matting = matting_.refine(fused, out.features.stem);
  Var t_pred = matting_.decode_trimaps(out.latents.x, out.matting.f_tri);
  Var a_pred =
      matting_.decode_boundary_alpha(out.latents.x, out.matting.f_alpha);
  out.instances = fuse_alpha(a_pred, t_pred);
  return out;
}

std::vector<SelectedInstance> E2EHim::infer(const Tensor& image,
                                            double threshold) const {
  NoGradGuard ng;
  ModelOutputs out = forward(image);
  return select_instances(out.aux.class_logits.val(),
                          out.instances.alpha_fin.val(), threshold);
}

}  // namespace him
