#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "him/tensor.hpp"

namespace him {

// IoU of two soft alphas binarized at `bin` (strictly greater). Both masks
// empty -> 1, exactly one empty -> 0. bin must lie inside (0,1).
double alpha_iou(const Tensor& pred, const Tensor& gt, double bin = 0.5);

struct MatchedPair {
  int pred = -1;
  int gt = -1;
  double iou = 0.0;
};

struct MatchedPairSet {
  std::vector<MatchedPair> pairs;  // ordered by gt-side index
  std::vector<int> unmatched_preds;
  std::vector<int> unmatched_gts;
  int n_pred = 0;
  int n_gt = 0;
};

// One-to-one assignment maximizing total IoU (Hungarian on negated IoU);
// ties break deterministically toward lower indexes.
MatchedPairSet match_for_eval(const std::vector<Tensor>& preds,
                              const std::vector<Tensor>& gts,
                              double bin = 0.5);

struct InstanceMetrics {
  std::optional<double> acc, rec, emse, emad;
  int n_th = 0;
};

// ACC/REC/EMSE/EMAD at an IoU threshold (strict >). Undefined ratios are
// reported as nullopt: ACC with no predictions, REC with no ground truths,
// EMSE/EMAD with no matches above the threshold. Per-instance errors are
// means over the full pixel grid of each matte.
InstanceMetrics instance_metrics(const MatchedPairSet& matches,
                                 const std::vector<Tensor>& preds,
                                 const std::vector<Tensor>& gts, double th);

struct ScalarMetrics {
  double sad = 0.0;  // raw sum of absolute differences
  double mse = 0.0;
  double mad = 0.0;
};

ScalarMetrics matting_metrics(const Tensor& pred, const Tensor& gt);

struct MetricsReport {
  struct ImageRecord {
    std::string id;
    int n_pred = 0;
    int n_gt = 0;
    double mean_iou = 0.0;  // over matched pairs, 0 when none
  };
  std::vector<std::pair<std::string, InstanceMetrics>> thresholds;
  std::optional<double> sad, mse, mad;  // means over matched pairs
  std::vector<ImageRecord> per_image;

  nlohmann::ordered_json to_json() const;
};

// Pools predictions and ground truths across images: instances only match
// within their own image, counts and error sums pool before division.
class EvalAccumulator {
 public:
  void add_image(const std::string& id, const std::vector<Tensor>& preds,
                 const std::vector<Tensor>& gts, double bin = 0.5);
  MetricsReport report(const std::vector<double>& ths = {0.5, 0.75}) const;

 private:
  MatchedPairSet pooled_;
  std::vector<Tensor> all_preds_, all_gts_;
  std::vector<MetricsReport::ImageRecord> images_;
};

}  // namespace him
