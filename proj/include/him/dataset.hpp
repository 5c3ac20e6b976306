#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "him/scene.hpp"
#include "him/scene_gen.hpp"

namespace him {

// On-disk layout per scene: image.png, bg.png, inst_<k>_{alpha,fg,trimap}.png
// and meta.json. A dataset root holds scenes/<id>/... plus manifest.json.
// Stored images are 8-bit, so the strict in-memory compositing identity turns
// into a quantization-tolerance check on load.

void save_scene(const std::string& dir, const Scene& scene, uint64_t seed);

// Rebuilds the scene from the stored components. The returned image is the
// exact double-precision recomposition; the stored image.png must agree with
// it to within quantization (else IoError).
Scene load_scene(const std::string& dir);

void write_dataset(const std::string& root, const SceneConfig& cfg, int count,
                   uint64_t seed);

// scene directories (absolute paths) in manifest order
std::vector<std::string> list_scenes(const std::string& root);

nlohmann::ordered_json scene_config_to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const nlohmann::json& j);

}  // namespace him
