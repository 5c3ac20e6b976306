#include "him/scene.hpp"

#include <algorithm>
#include <cmath>

namespace him {

Tensor alpha_to_trimap(const Tensor& alpha, double lo, double hi,
                       int dilate_radius) {
  if (alpha.rank() != 2)
    throw ShapeError("alpha_to_trimap: expected (H,W), got " + alpha.shape_str());
  if (!(0.0 <= lo && lo < hi && hi <= 1.0))
    throw ShapeError("alpha_to_trimap: need 0 <= lo < hi <= 1");
  if (dilate_radius < 0) throw ShapeError("alpha_to_trimap: negative radius");
  const int h = alpha.dim(0), w = alpha.dim(1);

  Tensor unk = Tensor::zeros({h, w});
  for (int64_t i = 0; i < alpha.numel(); ++i)
    unk[i] = (alpha[i] > lo && alpha[i] < hi) ? 1.0 : 0.0;

  // Chebyshev dilation by iterating the 3x3 max filter
  Tensor cur = unk;
  for (int r = 0; r < dilate_radius; ++r) {
    Tensor next = Tensor::zeros({h, w});
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double m = 0.0;
        for (int di = -1; di <= 1 && m == 0.0; ++di)
          for (int dj = -1; dj <= 1; ++dj) {
            const int y = i + di, x = j + dj;
            if (y >= 0 && y < h && x >= 0 && x < w &&
                cur[static_cast<int64_t>(y) * w + x] > 0.0) {
              m = 1.0;
              break;
            }
          }
        next[static_cast<int64_t>(i) * w + j] = m;
      }
    cur = next;
  }

  Tensor tri = Tensor::zeros({h, w});
  for (int64_t i = 0; i < alpha.numel(); ++i) {
    if (cur[i] > 0.0) tri[i] = kTrimapUnk;
    else tri[i] = alpha[i] >= hi ? kTrimapFg : kTrimapBg;
  }
  return tri;
}

InstanceRecord make_instance(Tensor alpha, Tensor foreground, double lo,
                             double hi, int dilate_radius) {
  if (alpha.rank() != 2)
    throw ShapeError("make_instance: alpha must be (H,W), got " + alpha.shape_str());
  if (foreground.rank() != 3 || foreground.dim(0) != 3 ||
      foreground.dim(1) != alpha.dim(0) || foreground.dim(2) != alpha.dim(1))
    throw ShapeError("make_instance: foreground " + foreground.shape_str() +
                     " does not match alpha " + alpha.shape_str());
  InstanceRecord rec;
  rec.alpha = alpha.clone();
  for (int64_t i = 0; i < rec.alpha.numel(); ++i) {
    double v = rec.alpha[i];
    if (v <= lo) v = 0.0;
    else if (v >= hi) v = 1.0;
    rec.alpha[i] = std::clamp(v, 0.0, 1.0);
  }
  rec.foreground = foreground.clone();
  for (int64_t i = 0; i < rec.foreground.numel(); ++i)
    rec.foreground[i] = std::clamp(rec.foreground[i], 0.0, 1.0);
  rec.trimap = alpha_to_trimap(rec.alpha, lo, hi, dilate_radius);
  rec.binary_mask = Tensor::zeros(rec.alpha.shape());
  for (int64_t i = 0; i < rec.alpha.numel(); ++i)
    rec.binary_mask[i] = rec.alpha[i] > 0.5 ? 1.0 : 0.0;
  return rec;
}

std::vector<Tensor> occlusion_alphas(const std::vector<InstanceRecord>& instances) {
  if (instances.empty()) throw ShapeError("occlusion_alphas: empty instance list");
  const int64_t n = instances[0].alpha.numel();
  std::vector<Tensor> eff;
  eff.reserve(instances.size());
  for (size_t k = 0; k < instances.size(); ++k) {
    Tensor a = instances[k].alpha.clone();
    for (size_t j = k + 1; j < instances.size(); ++j) {
      const Tensor& front = instances[j].alpha;
      if (front.numel() != n)
        throw ShapeError("occlusion_alphas: instance shapes differ");
      for (int64_t i = 0; i < n; ++i) a[i] *= 1.0 - front[i];
    }
    eff.push_back(a);
  }
  return eff;
}

Scene composite(Tensor background, std::vector<InstanceRecord> instances) {
  if (background.rank() != 3 || background.dim(0) != 3)
    throw ShapeError("composite: background must be (3,H,W), got " +
                     background.shape_str());
  if (instances.empty()) throw ShapeError("composite: empty instance list");
  const int h = background.dim(1), w = background.dim(2);
  for (const InstanceRecord& rec : instances) {
    if (rec.alpha.rank() != 2 || rec.alpha.dim(0) != h || rec.alpha.dim(1) != w)
      throw ShapeError("composite: instance alpha " + rec.alpha.shape_str() +
                       " does not match background " + background.shape_str());
    check_same_shape(rec.foreground, background, "composite foreground");
  }

  Scene scene;
  scene.background = std::move(background);
  scene.instances = std::move(instances);
  scene.effective_alphas = occlusion_alphas(scene.instances);

  const int64_t plane = static_cast<int64_t>(h) * w;
  scene.image = Tensor::zeros({3, h, w});
  Tensor cover = Tensor::zeros({h, w});  // sum of effective alphas
  for (size_t k = 0; k < scene.instances.size(); ++k) {
    const Tensor& a = scene.effective_alphas[k];
    const Tensor& f = scene.instances[k].foreground;
    for (int c = 0; c < 3; ++c)
      for (int64_t i = 0; i < plane; ++i)
        scene.image[c * plane + i] += a[i] * f[c * plane + i];
    for (int64_t i = 0; i < plane; ++i) cover[i] += a[i];
  }
  for (int c = 0; c < 3; ++c)
    for (int64_t i = 0; i < plane; ++i)
      scene.image[c * plane + i] += (1.0 - cover[i]) * scene.background[c * plane + i];
  return scene;
}

double compositing_residual(const Scene& scene) {
  Scene redo = composite(scene.background, scene.instances);
  double worst = 0.0;
  for (int64_t i = 0; i < scene.image.numel(); ++i)
    worst = std::max(worst, std::abs(scene.image[i] - redo.image[i]));
  return worst;
}

void validate_scene(const Scene& scene, double residual_tol) {
  if (scene.image.rank() != 3 || scene.image.dim(0) != 3)
    throw ShapeError("scene: image must be (3,H,W)");
  const int h = scene.height(), w = scene.width();
  if (h % 16 != 0 || w % 16 != 0)
    throw ShapeError("scene: H and W must be divisible by 16");
  check_same_shape(scene.image, scene.background, "scene background");
  if (scene.instances.empty()) throw ShapeError("scene: no instances");
  if (scene.effective_alphas.size() != scene.instances.size())
    throw ShapeError("scene: effective alpha count mismatch");
  if (scene.image.min() < 0.0 || scene.image.max() > 1.0 + 1e-12)
    throw ShapeError("scene: image values out of [0,1]");

  for (size_t k = 0; k < scene.instances.size(); ++k) {
    const InstanceRecord& rec = scene.instances[k];
    if (rec.alpha.dim(0) != h || rec.alpha.dim(1) != w)
      throw ShapeError("scene: instance alpha shape mismatch");
    for (int64_t i = 0; i < rec.alpha.numel(); ++i) {
      const double a = rec.alpha[i];
      if (a < 0.0 || a > 1.0) throw ShapeError("scene: alpha out of [0,1]");
      const int tri = static_cast<int>(std::lround(rec.trimap[i]));
      if (tri == kTrimapFg) {
        if (a != 1.0) throw ShapeError("scene: alpha != 1 inside trimap FG");
        if (rec.binary_mask[i] != 1.0)
          throw ShapeError("scene: mask false inside trimap FG");
      } else if (tri == kTrimapBg) {
        if (a != 0.0) throw ShapeError("scene: alpha != 0 inside trimap BG");
      } else if (tri != kTrimapUnk) {
        throw ShapeError("scene: trimap label out of {0,1,2}");
      }
      if (rec.binary_mask[i] != (a > 0.5 ? 1.0 : 0.0))
        throw ShapeError("scene: mask != (alpha > 0.5)");
    }
  }

  // occlusion conservation: coverage + background weight is exactly one
  for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
    double cover = 0.0;
    for (const Tensor& a : scene.effective_alphas) cover += a[i];
    if (cover > 1.0 + 1e-6) throw ShapeError("scene: alpha coverage exceeds 1");
    if (cover + (1.0 - cover) != 1.0)
      throw ShapeError("scene: coverage not conserved");
  }

  const double res = compositing_residual(scene);
  if (res > residual_tol)
    throw ShapeError("scene: compositing residual " + std::to_string(res) +
                     " exceeds tolerance");
}

}  // namespace him
