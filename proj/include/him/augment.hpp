#pragma once

#include "him/rng.hpp"
#include "him/scene.hpp"

namespace him {

// Seeded training-time augmentation. Geometry and color act on the scene
// components (alphas, foregrounds, background) and the image is recomposited,
// so the compositing identity keeps holding exactly.
struct AugmentConfig {
  int crop_h = 128;
  int crop_w = 128;
  double p_flip = 0.5;
  double p_affine = 0.3;
  double max_rotate_deg = 10.0;
  double max_scale_delta = 0.12;
  double max_translate_frac = 0.08;
  double p_color = 0.8;
  double contrast_jitter = 0.2;
  double gamma_jitter = 0.2;
  double saturation_jitter = 0.25;
  double p_paste = 0.25;     // instance-paste from the donor scene
  int max_instances = 8;
  double alpha_lo = 0.01;    // snap/trimap thresholds after resampling
  double alpha_hi = 0.99;
  int trimap_dilate = 3;

  void validate(int scene_h, int scene_w) const;  // throws ConfigError
};

// donor supplies instances for the paste augmentation; pass nullptr to
// disable. With all probabilities zero and crop == scene size the input is
// returned unchanged.
Scene augment(const Scene& scene, const AugmentConfig& cfg, uint64_t seed,
              const Scene* donor = nullptr);

}  // namespace him
