#pragma once

#include "him/rng.hpp"
#include "him/scene.hpp"

namespace him {

// Procedural scene source: soft-edged "blob person" silhouettes (torso with
// radial harmonics plus a head) over a textured background.
struct SceneConfig {
  int height = 128;
  int width = 128;
  int min_instances = 1;
  int max_instances = 4;
  int blob_harmonics = 3;       // shape complexity of the torso outline
  double edge_softness = 2.5;   // width of the fractional-alpha band, px (>= 2)
  double min_radius_frac = 0.12;  // torso radius relative to min(H,W)
  double max_radius_frac = 0.26;
  double alpha_lo = 0.01;       // trimap/snap thresholds
  double alpha_hi = 0.99;
  int trimap_dilate = 3;

  void validate() const;  // throws ConfigError
};

// Pure function of (config, seed); same inputs give bitwise-identical scenes.
Scene generate_scene(const SceneConfig& cfg, uint64_t seed);

}  // namespace him
