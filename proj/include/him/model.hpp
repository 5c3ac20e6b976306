#pragma once

#include <vector>

#include "him/guidance.hpp"
#include "him/matting.hpp"
#include "him/perception.hpp"

namespace him {

// Everything one forward pass produces; training consumes the logits, the
// inference path consumes alpha_fin plus the class logits.
struct ModelOutputs {
  EncoderFeatures features;
  LatentCodes latents;
  Var f_dc;
  AuxOutputs aux;
  UnitedGuidance guidance;
  MattingFeatures matting;  // f_alpha at full, f_tri at half resolution
  InstancePredictions instances;
};

// The full end-to-end human instance matting model: one forward pass yields
// class logits, instance mask logits, trimaps and alpha mattes for N queries.
class E2EHim {
 public:
  E2EHim(const NetworkConfig& cfg, uint64_t init_seed);

  ModelOutputs forward(const Tensor& image) const;
  // Forward without gradient tracking, then threshold on the human class.
  std::vector<SelectedInstance> infer(const Tensor& image,
                                      double threshold = 0.5) const;

  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  const NetworkConfig& config() const { return cfg_; }

 private:
  // The by-value Rng threads one init stream through all three sub-nets.
  E2EHim(const NetworkConfig& cfg, Rng rng);

  NetworkConfig cfg_;
  nn::ParamSet params_;
  PerceptionNet perception_;
  UnitedGuidanceNet guidance_;
  MattingNet matting_;
};

}  // namespace him
