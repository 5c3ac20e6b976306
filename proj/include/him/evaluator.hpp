#pragma once

#include <string>
#include <vector>

#include "him/metrics.hpp"
#include "him/model.hpp"
#include "him/scene.hpp"

namespace him {

struct EvalOptions {
  double threshold = 0.5;  // class-confidence cutoff for kept queries
  bool oracle = false;     // pipe ground truth through as predictions
  std::vector<double> iou_thresholds = {0.5, 0.75};
};

// Runs inference (or the oracle identity) over the scenes and pools the
// instance metrics. pass model = nullptr only with opts.oracle = true.
MetricsReport evaluate(const E2EHim* model, const std::vector<Scene>& scenes,
                       const EvalOptions& opts = {});

// Loads every scene under data_dir (dataset layout with manifest) first.
MetricsReport evaluate_dir(const E2EHim* model, const std::string& data_dir,
                           const EvalOptions& opts = {});

}  // namespace him
