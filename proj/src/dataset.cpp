#include "him/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "him/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace him {

namespace {

Tensor quantize(const Tensor& t) {
  Tensor q = t.clone();
  for (int64_t i = 0; i < q.numel(); ++i) {
    double v = std::clamp(q[i], 0.0, 1.0);
    q[i] = std::lround(v * 255.0) / 255.0;
  }
  return q;
}

json bbox_of(const Tensor& alpha) {
  const int h = alpha.dim(0), w = alpha.dim(1);
  int x0 = w, y0 = h, x1 = 0, y1 = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (alpha[static_cast<int64_t>(y) * w + x] > 0.0) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x + 1);
        y1 = std::max(y1, y + 1);
      }
  if (x0 > x1) x0 = y0 = x1 = y1 = 0;  // empty support
  return json::array({x0, y0, x1, y1});
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << text;
  if (!os) throw IoError("write failed: " + path);
}

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw IoError("bad json in " + path + ": " + e.what());
  }
  return j;
}

}  // namespace

void save_scene(const std::string& dir, const Scene& scene, uint64_t seed) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

  // quantize components first, then recomposite, so the files satisfy the
  // compositing identity among themselves
  std::vector<InstanceRecord> recs;
  recs.reserve(scene.instances.size());
  for (const InstanceRecord& rec : scene.instances) {
    InstanceRecord q = rec;
    q.alpha = quantize(rec.alpha);
    q.foreground = quantize(rec.foreground);
    q.binary_mask = Tensor::zeros(q.alpha.shape());
    for (int64_t i = 0; i < q.alpha.numel(); ++i)
      q.binary_mask[i] = q.alpha[i] > 0.5 ? 1.0 : 0.0;
    recs.push_back(std::move(q));
  }
  Scene stored = composite(quantize(scene.background), std::move(recs));

  write_png_rgb(dir + "/image.png", stored.image);
  write_png_rgb(dir + "/bg.png", stored.background);
  ordered_json meta;
  meta["seed"] = seed;
  meta["height"] = stored.height();
  meta["width"] = stored.width();
  meta["instances"] = stored.instances.size();
  json boxes = json::array();
  json cats = json::array();
  for (size_t k = 0; k < stored.instances.size(); ++k) {
    const InstanceRecord& rec = stored.instances[k];
    std::string base = dir + "/inst_" + std::to_string(k);
    write_png_gray(base + "_alpha.png", rec.alpha);
    write_png_rgb(base + "_fg.png", rec.foreground);
    write_png_trimap(base + "_trimap.png", rec.trimap);
    boxes.push_back(bbox_of(rec.alpha));
    cats.push_back(rec.category);
  }
  meta["boxes"] = boxes;
  meta["categories"] = cats;
  write_text(dir + "/meta.json", meta.dump(2) + "\n");
}

Scene load_scene(const std::string& dir) {
  const json meta = read_json_file(dir + "/meta.json");
  const int count = meta.at("instances").get<int>();
  if (count < 1) throw IoError("scene has no instances: " + dir);

  Tensor bg = read_png_rgb(dir + "/bg.png");
  std::vector<InstanceRecord> recs;
  for (int k = 0; k < count; ++k) {
    const std::string base = dir + "/inst_" + std::to_string(k);
    InstanceRecord rec;
    rec.alpha = read_png_gray(base + "_alpha.png");
    rec.foreground = read_png_rgb(base + "_fg.png");
    rec.trimap = read_png_trimap(base + "_trimap.png");
    if (meta.contains("categories"))
      rec.category = meta.at("categories").at(static_cast<size_t>(k)).get<std::string>();
    if (rec.alpha.shape() != rec.trimap.shape())
      throw IoError("alpha/trimap size mismatch in " + dir);
    rec.binary_mask = Tensor::zeros(rec.alpha.shape());
    for (int64_t i = 0; i < rec.alpha.numel(); ++i) {
      const double a = rec.alpha[i];
      const int tri = static_cast<int>(std::lround(rec.trimap[i]));
      if (tri == kTrimapFg && a != 1.0)
        throw IoError("alpha != 1 inside FG trimap: " + base);
      if (tri == kTrimapBg && a != 0.0)
        throw IoError("alpha != 0 inside BG trimap: " + base);
      rec.binary_mask[i] = a > 0.5 ? 1.0 : 0.0;
    }
    recs.push_back(std::move(rec));
  }

  Scene scene = composite(std::move(bg), std::move(recs));
  Tensor stored_image = read_png_rgb(dir + "/image.png");
  check_same_shape(stored_image, scene.image, "loaded image");
  double worst = 0.0;
  for (int64_t i = 0; i < stored_image.numel(); ++i)
    worst = std::max(worst, std::abs(stored_image[i] - scene.image[i]));
  if (worst > 2.5 / 255.0)
    throw IoError("stored image deviates from recomposition by " +
                  std::to_string(worst) + " in " + dir);
  return scene;
}

void write_dataset(const std::string& root, const SceneConfig& cfg, int count,
                   uint64_t seed) {
  cfg.validate();
  if (count < 1) throw ConfigError("dataset: count must be >= 1");
  std::error_code ec;
  fs::create_directories(root + "/scenes", ec);
  if (ec) throw IoError("cannot create " + root + ": " + ec.message());

  Rng base(seed);
  ordered_json manifest;
  manifest["seed"] = seed;
  manifest["count"] = count;
  manifest["config"] = scene_config_to_json(cfg);
  json ids = json::array();
  for (int i = 0; i < count; ++i) {
    const uint64_t scene_seed = base.next_u64();
    std::ostringstream id;
    id << std::setw(6) << std::setfill('0') << i;
    const std::string rel = "scenes/" + id.str();
    Scene scene = generate_scene(cfg, scene_seed);
    save_scene(root + "/" + rel, scene, scene_seed);
    ids.push_back(rel);
  }
  manifest["scenes"] = ids;
  write_text(root + "/manifest.json", manifest.dump(2) + "\n");
}

std::vector<std::string> list_scenes(const std::string& root) {
  const json manifest = read_json_file(root + "/manifest.json");
  std::vector<std::string> dirs;
  for (const auto& rel : manifest.at("scenes"))
    dirs.push_back(root + "/" + rel.get<std::string>());
  if (dirs.empty()) throw IoError("empty dataset manifest: " + root);
  return dirs;
}

nlohmann::ordered_json scene_config_to_json(const SceneConfig& cfg) {
  ordered_json j;
  j["height"] = cfg.height;
  j["width"] = cfg.width;
  j["min_instances"] = cfg.min_instances;
  j["max_instances"] = cfg.max_instances;
  j["blob_harmonics"] = cfg.blob_harmonics;
  j["edge_softness"] = cfg.edge_softness;
  j["min_radius_frac"] = cfg.min_radius_frac;
  j["max_radius_frac"] = cfg.max_radius_frac;
  j["alpha_lo"] = cfg.alpha_lo;
  j["alpha_hi"] = cfg.alpha_hi;
  j["trimap_dilate"] = cfg.trimap_dilate;
  return j;
}

SceneConfig scene_config_from_json(const nlohmann::json& j) {
  SceneConfig cfg;
  try {
    if (j.contains("height")) cfg.height = j.at("height").get<int>();
    if (j.contains("width")) cfg.width = j.at("width").get<int>();
    if (j.contains("min_instances")) cfg.min_instances = j.at("min_instances").get<int>();
    if (j.contains("max_instances")) cfg.max_instances = j.at("max_instances").get<int>();
    if (j.contains("blob_harmonics")) cfg.blob_harmonics = j.at("blob_harmonics").get<int>();
    if (j.contains("edge_softness")) cfg.edge_softness = j.at("edge_softness").get<double>();
    if (j.contains("min_radius_frac")) cfg.min_radius_frac = j.at("min_radius_frac").get<double>();
    if (j.contains("max_radius_frac")) cfg.max_radius_frac = j.at("max_radius_frac").get<double>();
    if (j.contains("alpha_lo")) cfg.alpha_lo = j.at("alpha_lo").get<double>();
    if (j.contains("alpha_hi")) cfg.alpha_hi = j.at("alpha_hi").get<double>();
    if (j.contains("trimap_dilate")) cfg.trimap_dilate = j.at("trimap_dilate").get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scene config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace him
