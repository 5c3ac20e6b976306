#pragma once

#include <vector>

#include "him/graph.hpp"
#include "him/matcher.hpp"
#include "him/scene.hpp"

namespace him {

// Loss coefficients; defaults are the trained configuration.
struct LossWeights {
  double lambda_c = 5.0;    // class term inside the perception loss
  double lambda_s = 1.0;    // segmentation term inside the perception loss
  double lambda_b = 0.1;    // focal BCE inside the segmentation loss
  double lambda_d = 1.0;    // dice inside the segmentation loss
  double lambda_t = 10.0;   // trimap term inside the matting loss
  double lambda_alpha = 5.0;  // alpha term inside the matting loss
  double lambda_pu = 3.0;   // predicted-unknown alpha term
  double lambda_gu = 5.0;   // ground-truth-unknown alpha term
  double lambda_p = 1.0;    // perception loss in the total
  double lambda_m = 1.0;    // matting loss in the total
  double w_background = 0.1;  // class weight for unmatched queries
  double w_human = 1.0;       // class weight for matched queries
  double focal_gamma = 2.0;

  void validate() const;  // throws ConfigError on negative weights
};

// Ground truth arranged for supervision. Matting targets are the
// post-occlusion alphas; mask targets live at stride 8 where the auxiliary
// mask logits are predicted.
struct SupervisionTargets {
  std::vector<Tensor> masks8;    // (H/8,W/8) binary
  std::vector<Tensor> alphas;    // (H,W) effective alpha
  std::vector<Tensor> trimaps;   // (H,W) labels {0,1,2} from effective alpha
  std::vector<Tensor> unknowns;  // (H,W) binary, trimap == UNK
  int height = 0, width = 0;
};

SupervisionTargets build_targets(const Scene& scene, double lo = 0.01,
                                 double hi = 0.99, int dilate_radius = 3);

// Pairwise matching cost, queries x targets, plus its three components.
// Computed outside the gradient tape; the assignment is a constant per step.
struct CostMatrix {
  Tensor total;  // (N,X)
  Tensor cls, focal, dice;
};

CostMatrix match_cost(const Tensor& class_logits,            // (N,2)
                      const Tensor& mask_logits,             // (N,H/8,W/8)
                      const std::vector<Tensor>& target_masks8,
                      double focal_gamma = 2.0);

Assignment assign(const CostMatrix& costs);

// Predictions participating in the loss. unknown_pred is the constant {0,1}
// mask taken from the trimap argmax.
struct PredictionRefs {
  Var class_logits;    // (N,2), column 1 = human
  Var mask_logits;     // (N,H/8,W/8)
  Var trimap_logits;   // (N,3,H,W)
  Var alpha;           // (N,1,H,W) boundary alpha from the matting head
  Tensor unknown_pred; // (N,1,H,W)
};

struct LossBreakdown {
  Var l_cls, l_seg, l_p;
  Var l_tri, l_alpha, l_m;
  Var l_total;
};

std::pair<Var, Var> perception_loss(const Var& class_logits,
                                    const Var& mask_logits,
                                    const Assignment& assignment,
                                    const SupervisionTargets& targets,
                                    const LossWeights& weights);  // (L_cls, L_seg)

std::pair<Var, Var> matting_loss(const Var& trimap_logits, const Var& alpha,
                                 const Tensor& unknown_pred,
                                 const Assignment& assignment,
                                 const SupervisionTargets& targets,
                                 const LossWeights& weights);  // (L_tri, L_alpha)

LossBreakdown compute_losses(const PredictionRefs& preds,
                             const Assignment& assignment,
                             const SupervisionTargets& targets,
                             const LossWeights& weights);

}  // namespace him
