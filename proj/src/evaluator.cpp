#include "him/evaluator.hpp"

#include <filesystem>

#include "him/dataset.hpp"

namespace him {

MetricsReport evaluate(const E2EHim* model, const std::vector<Scene>& scenes,
                       const EvalOptions& opts) {
  if (!model && !opts.oracle)
    throw ConfigError("evaluation without a model requires oracle mode");
  if (opts.threshold <= 0.0 || opts.threshold >= 1.0)
    throw ConfigError("confidence threshold must lie strictly inside (0,1)");

  EvalAccumulator acc;
  int image_index = 0;
  for (const Scene& s : scenes) {
    std::vector<Tensor> preds;
    if (opts.oracle) {
      preds = s.effective_alphas;
    } else {
      for (const SelectedInstance& inst : model->infer(s.image, opts.threshold))
        preds.push_back(inst.alpha);
    }
    acc.add_image("scene_" + std::to_string(image_index++), preds,
                  s.effective_alphas);
  }
  return acc.report(opts.iou_thresholds);
}

MetricsReport evaluate_dir(const E2EHim* model, const std::string& data_dir,
                           const EvalOptions& opts) {
  std::vector<Scene> scenes;
  for (const std::string& dir : list_scenes(data_dir))
    scenes.push_back(load_scene(dir));
  if (scenes.empty()) throw IoError("no scenes found under " + data_dir);
  return evaluate(model, scenes, opts);
}

}  // namespace him
