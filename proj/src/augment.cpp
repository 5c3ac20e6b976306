#include "him/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace him {

namespace {

Tensor flip_hw(const Tensor& t) {
  const int h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  const int64_t planes = t.numel() / (static_cast<int64_t>(h) * w);
  Tensor out = Tensor::zeros(t.shape());
  for (int64_t p = 0; p < planes; ++p) {
    const double* src = t.data() + p * h * w;
    double* dst = out.data() + p * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        dst[static_cast<int64_t>(y) * w + x] = src[static_cast<int64_t>(y) * w + (w - 1 - x)];
  }
  return out;
}

Scene flip_scene(const Scene& s) {
  Scene out;
  out.image = flip_hw(s.image);
  out.background = flip_hw(s.background);
  for (const InstanceRecord& rec : s.instances) {
    InstanceRecord r;
    r.alpha = flip_hw(rec.alpha);
    r.foreground = flip_hw(rec.foreground);
    r.binary_mask = flip_hw(rec.binary_mask);
    r.trimap = flip_hw(rec.trimap);
    r.category = rec.category;
    out.instances.push_back(std::move(r));
  }
  for (const Tensor& a : s.effective_alphas)
    out.effective_alphas.push_back(flip_hw(a));
  return out;
}

struct Affine {
  // output pixel -> source pixel (inverse map), about the canvas center
  double m00, m01, m10, m11, tx, ty, cx, cy;
  void apply(double x, double y, double* sx, double* sy) const {
    const double dx = x - cx - tx, dy = y - cy - ty;
    *sx = m00 * dx + m01 * dy + cx;
    *sy = m10 * dx + m11 * dy + cy;
  }
};

// bilinear sample of one plane; outside=clamp uses edge values, otherwise 0
double sample_plane(const double* p, int h, int w, double sx, double sy,
                    bool clamp_edge) {
  if (!clamp_edge && (sx < -1.0 || sx > w || sy < -1.0 || sy > h)) return 0.0;
  double fx = std::floor(sx), fy = std::floor(sy);
  int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const double ux = sx - fx, uy = sy - fy;
  auto at = [&](int y, int x) -> double {
    if (clamp_edge) {
      y = std::clamp(y, 0, h - 1);
      x = std::clamp(x, 0, w - 1);
      return p[static_cast<int64_t>(y) * w + x];
    }
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    return p[static_cast<int64_t>(y) * w + x];
  };
  return (1.0 - uy) * ((1.0 - ux) * at(y0, x0) + ux * at(y0, x0 + 1)) +
         uy * ((1.0 - ux) * at(y0 + 1, x0) + ux * at(y0 + 1, x0 + 1));
}

Tensor warp(const Tensor& t, const Affine& a, bool clamp_edge) {
  const int h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  const int64_t planes = t.numel() / (static_cast<int64_t>(h) * w);
  Tensor out = Tensor::zeros(t.shape());
  for (int64_t p = 0; p < planes; ++p) {
    const double* src = t.data() + p * h * w;
    double* dst = out.data() + p * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double sx, sy;
        a.apply(x, y, &sx, &sy);
        dst[static_cast<int64_t>(y) * w + x] = sample_plane(src, h, w, sx, sy, clamp_edge);
      }
  }
  return out;
}

int visible_pixels(const Tensor& alpha) {
  int px = 0;
  for (int64_t i = 0; i < alpha.numel(); ++i)
    if (alpha[i] > 0.5) ++px;
  return px;
}

Tensor slice_hw(const Tensor& t, int oy, int ox, int ch, int cw) {
  const int h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  const int64_t planes = t.numel() / (static_cast<int64_t>(h) * w);
  std::vector<int> shape = t.shape();
  shape[shape.size() - 2] = ch;
  shape[shape.size() - 1] = cw;
  Tensor out = Tensor::zeros(shape);
  for (int64_t p = 0; p < planes; ++p)
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x)
        out[(p * ch + y) * cw + x] =
            t[(p * h + oy + y) * static_cast<int64_t>(w) + ox + x];
  return out;
}

// shared color map for every component; keeps values in [0,1]
void color_jitter(Tensor& rgb, double contrast, double gamma, double saturation) {
  const int64_t plane = rgb.numel() / 3;
  for (int64_t i = 0; i < plane; ++i) {
    double c[3];
    for (int k = 0; k < 3; ++k) {
      double v = rgb[k * plane + i];
      v = 0.5 + contrast * (v - 0.5);
      v = std::clamp(v, 0.0, 1.0);
      c[k] = std::pow(v, gamma);
    }
    const double lum = 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
    for (int k = 0; k < 3; ++k)
      rgb[k * plane + i] = std::clamp(lum + saturation * (c[k] - lum), 0.0, 1.0);
  }
}

}  // namespace

void AugmentConfig::validate(int scene_h, int scene_w) const {
  if (crop_h < 32 || crop_w < 32 || crop_h % 16 != 0 || crop_w % 16 != 0)
    throw ConfigError("augment: crop must be >= 32 and divisible by 16");
  if (crop_h > scene_h || crop_w > scene_w)
    throw ConfigError("augment: crop larger than scene canvas");
  for (double p : {p_flip, p_affine, p_color, p_paste})
    if (p < 0.0 || p > 1.0) throw ConfigError("augment: probability out of [0,1]");
  if (max_rotate_deg < 0.0 || max_scale_delta < 0.0 || max_scale_delta >= 1.0 ||
      max_translate_frac < 0.0 || contrast_jitter < 0.0 || gamma_jitter < 0.0 ||
      gamma_jitter >= 1.0 || saturation_jitter < 0.0)
    throw ConfigError("augment: negative or out-of-range jitter");
  if (max_instances < 1) throw ConfigError("augment: max_instances < 1");
  if (!(0.0 <= alpha_lo && alpha_lo < alpha_hi && alpha_hi <= 1.0))
    throw ConfigError("augment: bad alpha thresholds");
}

Scene augment(const Scene& scene, const AugmentConfig& cfg, uint64_t seed,
              const Scene* donor) {
  cfg.validate(scene.height(), scene.width());
  Rng rng(seed);
  Scene cur = scene;

  // paste donor instances in front, then recomposite
  if (donor && !donor->instances.empty() && rng.bernoulli(cfg.p_paste) &&
      static_cast<int>(cur.instances.size()) < cfg.max_instances) {
    if (donor->height() != cur.height() || donor->width() != cur.width())
      throw ShapeError("augment: donor scene size differs");
    const int room = cfg.max_instances - static_cast<int>(cur.instances.size());
    const int take = rng.uniform_int(
        1, std::min(room, static_cast<int>(donor->instances.size())));
    std::vector<size_t> idx(donor->instances.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    for (size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    std::vector<InstanceRecord> merged = cur.instances;
    for (int k = 0; k < take; ++k)
      merged.push_back(donor->instances[idx[static_cast<size_t>(k)]]);
    cur = composite(cur.background, std::move(merged));
  }

  if (rng.bernoulli(cfg.p_flip)) cur = flip_scene(cur);

  if (rng.bernoulli(cfg.p_affine)) {
    const double th = rng.uniform(-cfg.max_rotate_deg, cfg.max_rotate_deg) *
                      (3.14159265358979323846 / 180.0);
    const double sc = 1.0 + rng.uniform(-cfg.max_scale_delta, cfg.max_scale_delta);
    Affine a;
    a.tx = rng.uniform(-cfg.max_translate_frac, cfg.max_translate_frac) * cur.width();
    a.ty = rng.uniform(-cfg.max_translate_frac, cfg.max_translate_frac) * cur.height();
    a.cx = (cur.width() - 1) * 0.5;
    a.cy = (cur.height() - 1) * 0.5;
    const double inv = 1.0 / sc;  // inverse map: rotate by -th, scale by 1/sc
    a.m00 = std::cos(th) * inv;
    a.m01 = std::sin(th) * inv;
    a.m10 = -std::sin(th) * inv;
    a.m11 = std::cos(th) * inv;

    std::vector<InstanceRecord> warped;
    for (const InstanceRecord& rec : cur.instances) {
      InstanceRecord r = make_instance(warp(rec.alpha, a, false),
                                       warp(rec.foreground, a, true),
                                       cfg.alpha_lo, cfg.alpha_hi, cfg.trimap_dilate);
      r.category = rec.category;
      if (visible_pixels(r.alpha) >= 16) warped.push_back(std::move(r));
    }
    if (!warped.empty())
      cur = composite(warp(cur.background, a, true), std::move(warped));
  }

  if (rng.bernoulli(cfg.p_color)) {
    const double contrast = 1.0 + rng.uniform(-cfg.contrast_jitter, cfg.contrast_jitter);
    const double gamma = 1.0 + rng.uniform(-cfg.gamma_jitter, cfg.gamma_jitter);
    const double saturation =
        1.0 + rng.uniform(-cfg.saturation_jitter, cfg.saturation_jitter);
    Tensor bg = cur.background.clone();
    color_jitter(bg, contrast, gamma, saturation);
    std::vector<InstanceRecord> recs = cur.instances;
    for (InstanceRecord& rec : recs) {
      rec.foreground = rec.foreground.clone();
      color_jitter(rec.foreground, contrast, gamma, saturation);
    }
    cur = composite(bg, std::move(recs));
  }

  if (cfg.crop_h != cur.height() || cfg.crop_w != cur.width()) {
    const int max_oy = cur.height() - cfg.crop_h;
    const int max_ox = cur.width() - cfg.crop_w;
    int oy = 0, ox = 0;
    bool found = false;
    for (int attempt = 0; attempt < 20 && !found; ++attempt) {
      oy = rng.uniform_int(0, max_oy);
      ox = rng.uniform_int(0, max_ox);
      for (const Tensor& eff : cur.effective_alphas) {
        for (int y = 0; y < cfg.crop_h && !found; ++y)
          for (int x = 0; x < cfg.crop_w; ++x)
            if (eff[static_cast<int64_t>(oy + y) * cur.width() + ox + x] > 0.5) {
              found = true;
              break;
            }
        if (found) break;
      }
    }
    if (!found) {
      // center the window on the strongest visible pixel
      int64_t best = 0;
      double best_v = -1.0;
      for (const Tensor& eff : cur.effective_alphas)
        for (int64_t i = 0; i < eff.numel(); ++i)
          if (eff[i] > best_v) {
            best_v = eff[i];
            best = i;
          }
      const int by = static_cast<int>(best / cur.width());
      const int bx = static_cast<int>(best % cur.width());
      oy = std::clamp(by - cfg.crop_h / 2, 0, max_oy);
      ox = std::clamp(bx - cfg.crop_w / 2, 0, max_ox);
    }

    std::vector<InstanceRecord> kept;
    for (size_t k = 0; k < cur.instances.size(); ++k) {
      Tensor eff_window = slice_hw(cur.effective_alphas[k], oy, ox, cfg.crop_h, cfg.crop_w);
      if (visible_pixels(eff_window) < 1) continue;
      const InstanceRecord& rec = cur.instances[k];
      InstanceRecord r;
      r.alpha = slice_hw(rec.alpha, oy, ox, cfg.crop_h, cfg.crop_w);
      r.foreground = slice_hw(rec.foreground, oy, ox, cfg.crop_h, cfg.crop_w);
      r.binary_mask = slice_hw(rec.binary_mask, oy, ox, cfg.crop_h, cfg.crop_w);
      r.trimap = slice_hw(rec.trimap, oy, ox, cfg.crop_h, cfg.crop_w);
      r.category = rec.category;
      kept.push_back(std::move(r));
    }
    if (kept.empty()) {
      // degenerate window: keep every instance; their crops may be empty but
      // the scene stays structurally valid
      for (const InstanceRecord& rec : cur.instances) {
        InstanceRecord r;
        r.alpha = slice_hw(rec.alpha, oy, ox, cfg.crop_h, cfg.crop_w);
        r.foreground = slice_hw(rec.foreground, oy, ox, cfg.crop_h, cfg.crop_w);
        r.binary_mask = slice_hw(rec.binary_mask, oy, ox, cfg.crop_h, cfg.crop_w);
        r.trimap = slice_hw(rec.trimap, oy, ox, cfg.crop_h, cfg.crop_w);
        r.category = rec.category;
        kept.push_back(std::move(r));
      }
    }
    cur = composite(slice_hw(cur.background, oy, ox, cfg.crop_h, cfg.crop_w),
                    std::move(kept));
  }

  return cur;
}

}  // namespace him
