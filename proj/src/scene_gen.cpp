#include "him/scene_gen.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace him {

namespace {

constexpr double kTwoPi = 6.283185307179586;

double smoothstep01(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return u * u * (3.0 - 2.0 * u);
}

struct Blob {
  double cx, cy, r, sy;         // torso center, radius, vertical stretch
  double hx, hy, hr;            // head circle
  std::vector<double> amp, phase;
};

Blob sample_blob(Rng& rng, const SceneConfig& cfg) {
  const double base = std::min(cfg.height, cfg.width);
  Blob b;
  b.r = base * rng.uniform(cfg.min_radius_frac, cfg.max_radius_frac);
  b.sy = rng.uniform(1.1, 1.45);
  b.cx = rng.uniform(0.22, 0.78) * cfg.width;
  b.cy = rng.uniform(0.45, 0.78) * cfg.height;
  b.hr = b.r * rng.uniform(0.35, 0.5);
  b.hx = b.cx + rng.uniform(-0.15, 0.15) * b.r;
  b.hy = b.cy - b.sy * b.r * 0.92 - b.hr * 0.55;
  b.amp.resize(static_cast<size_t>(cfg.blob_harmonics));
  b.phase.resize(static_cast<size_t>(cfg.blob_harmonics));
  for (int h = 0; h < cfg.blob_harmonics; ++h) {
    b.amp[static_cast<size_t>(h)] = rng.uniform(-0.12, 0.12) / (h + 1);
    b.phase[static_cast<size_t>(h)] = rng.uniform(0.0, kTwoPi);
  }
  return b;
}

Tensor blob_alpha(const Blob& b, const SceneConfig& cfg) {
  const int h = cfg.height, w = cfg.width;
  Tensor a = Tensor::zeros({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = x - b.cx;
      const double dy = (y - b.cy) / b.sy;
      const double d = std::sqrt(dx * dx + dy * dy);
      const double theta = std::atan2(dy, dx);
      double boundary = b.r;
      for (size_t k = 0; k < b.amp.size(); ++k)
        boundary += b.r * b.amp[k] *
                    std::cos((static_cast<double>(k) + 1.0) * theta + b.phase[k]);
      const double torso =
          smoothstep01(0.5 - (d - boundary) / cfg.edge_softness);
      const double hd = std::sqrt((x - b.hx) * (x - b.hx) + (y - b.hy) * (y - b.hy));
      const double head = smoothstep01(0.5 - (hd - b.hr) / cfg.edge_softness);
      a[static_cast<int64_t>(y) * w + x] = std::max(torso, head);
    }
  return a;
}

// sinusoidal texture with a slow gradient, clamped inside (0,1)
Tensor texture(Rng& rng, int h, int w) {
  Tensor t = Tensor::zeros({3, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int c = 0; c < 3; ++c) {
    const double base = rng.uniform(0.2, 0.8);
    const double amp = rng.uniform(0.05, 0.15);
    const double kx = rng.uniform(0.02, 0.09) * kTwoPi;
    const double ky = rng.uniform(0.02, 0.09) * kTwoPi;
    const double phase = rng.uniform(0.0, kTwoPi);
    const double gx = rng.uniform(-0.15, 0.15);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = base + gx * (static_cast<double>(x) / w - 0.5) +
                   amp * std::sin(kx * x + ky * y + phase);
        if (v < 0.02) v = 0.02;
        if (v > 0.98) v = 0.98;
        t[c * plane + static_cast<int64_t>(y) * w + x] = v;
      }
  }
  return t;
}

Scene try_generate(const SceneConfig& cfg, Rng& rng) {
  const int count = rng.uniform_int(cfg.min_instances, cfg.max_instances);
  std::vector<Blob> blobs;
  for (int k = 0; k < count; ++k) {
    Blob b = sample_blob(rng, cfg);
    // keep centers apart so later instances do not bury earlier ones
    for (int attempt = 0; attempt < 30; ++attempt) {
      bool ok = true;
      for (const Blob& o : blobs) {
        const double dist = std::hypot(b.cx - o.cx, b.cy - o.cy);
        if (dist < 0.6 * (b.r + o.r)) {
          ok = false;
          break;
        }
      }
      if (ok) break;
      b = sample_blob(rng, cfg);
    }
    blobs.push_back(b);
  }

  std::vector<InstanceRecord> instances;
  instances.reserve(blobs.size());
  for (const Blob& b : blobs)
    instances.push_back(make_instance(blob_alpha(b, cfg), texture(rng, cfg.height, cfg.width),
                                      cfg.alpha_lo, cfg.alpha_hi, cfg.trimap_dilate));
  Tensor bg = texture(rng, cfg.height, cfg.width);
  return composite(bg, std::move(instances));
}

}  // namespace

void SceneConfig::validate() const {
  if (height < 32 || width < 32 || height % 16 != 0 || width % 16 != 0)
    throw ConfigError("scene: H and W must be >= 32 and divisible by 16");
  if (min_instances < 1 || max_instances < min_instances)
    throw ConfigError("scene: need 1 <= min_instances <= max_instances");
  if (blob_harmonics < 0 || blob_harmonics > 8)
    throw ConfigError("scene: blob_harmonics out of [0,8]");
  if (edge_softness < 2.0)
    throw ConfigError("scene: edge_softness must be >= 2 px");
  if (!(0.0 < min_radius_frac && min_radius_frac <= max_radius_frac))
    throw ConfigError("scene: bad radius range");
  if (max_radius_frac > 0.35)
    throw ConfigError("scene: max_radius_frac > 0.35 does not fit the canvas");
  if (!(0.0 <= alpha_lo && alpha_lo < alpha_hi && alpha_hi <= 1.0))
    throw ConfigError("scene: need 0 <= alpha_lo < alpha_hi <= 1");
  if (trimap_dilate < 0) throw ConfigError("scene: negative trimap_dilate");
}

Scene generate_scene(const SceneConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Scene scene;
  // retry with a forked stream when occlusion leaves an instance invisible
  for (int attempt = 0; attempt < 16; ++attempt) {
    Rng sub = rng.fork(static_cast<uint64_t>(attempt));
    scene = try_generate(cfg, sub);
    bool visible = true;
    for (const Tensor& eff : scene.effective_alphas) {
      int px = 0;
      for (int64_t i = 0; i < eff.numel(); ++i)
        if (eff[i] > 0.5) ++px;
      if (px < 16) {
        visible = false;
        break;
      }
    }
    if (visible) break;
  }
  return scene;
}

}  // namespace him
