#pragma once

#include <string>
#include <vector>

#include "him/tensor.hpp"

namespace him {

// Trimap labels used everywhere (tensor values and logit channel order).
enum Trimap : int { kTrimapBg = 0, kTrimapUnk = 1, kTrimapFg = 2 };

// One instance before occlusion. alpha is the raw matte, snapped so that
// alpha==1 wherever trimap==FG and alpha==0 wherever trimap==BG.
struct InstanceRecord {
  Tensor alpha;        // (H,W) in [0,1]
  Tensor foreground;   // (3,H,W) in [0,1]
  Tensor binary_mask;  // (H,W) in {0,1}, alpha > 0.5
  Tensor trimap;       // (H,W) labels {0,1,2}
  std::string category = "human";
};

// A composited image with full ground truth. instances are ordered back to
// front; effective_alphas are the post-occlusion mattes that actually blend
// into the image.
struct Scene {
  Tensor image;       // (3,H,W)
  Tensor background;  // (3,H,W)
  std::vector<InstanceRecord> instances;
  std::vector<Tensor> effective_alphas;  // (H,W) each

  int height() const { return image.dim(1); }
  int width() const { return image.dim(2); }
};

// FG where alpha >= hi, BG where alpha <= lo, UNK elsewhere; the UNK band is
// then dilated by dilate_radius (Chebyshev metric).
Tensor alpha_to_trimap(const Tensor& alpha, double lo = 0.01, double hi = 0.99,
                       int dilate_radius = 3);

// Snaps alpha outside (lo,hi) to exact 0/1, derives mask and trimap.
InstanceRecord make_instance(Tensor alpha, Tensor foreground, double lo = 0.01,
                             double hi = 0.99, int dilate_radius = 3);

// Occlusion product per instance: effective a_k = a_k * prod_{j>k} (1 - a_j).
std::vector<Tensor> occlusion_alphas(const std::vector<InstanceRecord>& instances);

// Blends instances over the background and stores both raw and effective
// alphas. Throws ShapeError on mismatched shapes or an empty instance list.
Scene composite(Tensor background, std::vector<InstanceRecord> instances);

// max |image - recomposition from stored components|
double compositing_residual(const Scene& scene);

// Checks every scene invariant (value ranges, trimap/alpha consistency,
// occlusion conservation, compositing residual <= tol). Throws ShapeError.
void validate_scene(const Scene& scene, double residual_tol = 1e-6);

}  // namespace him
