#include "him/supervision.hpp"

#include <cmath>
#include <string>

#include "him/ops.hpp"

namespace him {

void LossWeights::validate() const {
  for (double v : {lambda_c, lambda_s, lambda_b, lambda_d, lambda_t,
                   lambda_alpha, lambda_pu, lambda_gu, lambda_p, lambda_m,
                   w_background, w_human, focal_gamma})
    if (v < 0.0 || !std::isfinite(v))
      throw ConfigError("loss weights must be finite and nonnegative");
}

namespace {

// area-average an (H,W) binary map into stride-8 cells, binarize at 0.5
Tensor downsample_mask8(const Tensor& mask) {
  const int h = mask.dim(0), w = mask.dim(1);
  if (h % 8 != 0 || w % 8 != 0)
    throw ShapeError("mask downsample: H and W must be divisible by 8");
  const int h8 = h / 8, w8 = w / 8;
  Tensor out = Tensor::zeros({h8, w8});
  for (int y = 0; y < h8; ++y)
    for (int x = 0; x < w8; ++x) {
      double s = 0.0;
      for (int dy = 0; dy < 8; ++dy)
        for (int dx = 0; dx < 8; ++dx)
          s += mask[static_cast<int64_t>(y * 8 + dy) * w + (x * 8 + dx)];
      out[static_cast<int64_t>(y) * w8 + x] = s / 64.0 > 0.5 ? 1.0 : 0.0;
    }
  return out;
}

double stable_sigmoid(double v) {
  return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

// scalar (tape-free) versions used for the matching cost
double focal_bce_value(const double* logits, const Tensor& target, double gamma) {
  double loss = 0.0;
  for (int64_t i = 0; i < target.numel(); ++i) {
    const double p = stable_sigmoid(logits[i]);
    const double pt = target[i] > 0.5 ? p : 1.0 - p;
    loss += std::pow(1.0 - pt, gamma) * (-std::log(pt + 1e-8));
  }
  return loss / static_cast<double>(target.numel());
}

double dice_value(const double* logits, const Tensor& target) {
  double inter = 0.0, sp = 0.0, st = 0.0;
  for (int64_t i = 0; i < target.numel(); ++i) {
    const double p = stable_sigmoid(logits[i]);
    inter += p * target[i];
    sp += p;
    st += target[i];
  }
  return 1.0 - (2.0 * inter + 1.0) / (sp + st + 1.0);
}

}  // namespace

SupervisionTargets build_targets(const Scene& scene, double lo, double hi,
                                 int dilate_radius) {
  if (scene.instances.empty()) throw ShapeError("build_targets: empty scene");
  SupervisionTargets t;
  t.height = scene.height();
  t.width = scene.width();
  for (const Tensor& eff : scene.effective_alphas) {
    Tensor mask = Tensor::zeros(eff.shape());
    for (int64_t i = 0; i < eff.numel(); ++i)
      mask[i] = eff[i] > 0.5 ? 1.0 : 0.0;
    Tensor tri = alpha_to_trimap(eff, lo, hi, dilate_radius);
    Tensor unk = Tensor::zeros(tri.shape());
    for (int64_t i = 0; i < tri.numel(); ++i)
      unk[i] = tri[i] == kTrimapUnk ? 1.0 : 0.0;
    t.masks8.push_back(downsample_mask8(mask));
    t.alphas.push_back(eff);
    t.trimaps.push_back(std::move(tri));
    t.unknowns.push_back(std::move(unk));
  }
  return t;
}

CostMatrix match_cost(const Tensor& class_logits, const Tensor& mask_logits,
                      const std::vector<Tensor>& target_masks8,
                      double focal_gamma) {
  if (class_logits.rank() != 2 || class_logits.dim(1) != 2)
    throw ShapeError("match_cost: class logits must be (N,2)");
  if (mask_logits.rank() != 3)
    throw ShapeError("match_cost: mask logits must be (N,h,w)");
  const int n = class_logits.dim(0);
  const int x_count = static_cast<int>(target_masks8.size());
  if (mask_logits.dim(0) != n)
    throw ShapeError("match_cost: query count mismatch");
  if (x_count == 0) throw ShapeError("match_cost: no targets");
  if (x_count > n)
    throw ShapeError("match_cost: " + std::to_string(x_count) +
                     " targets exceed " + std::to_string(n) + " queries");
  if (!class_logits.all_finite() || !mask_logits.all_finite())
    throw ShapeError("match_cost: non-finite prediction");
  const int64_t plane = static_cast<int64_t>(mask_logits.dim(1)) * mask_logits.dim(2);
  for (const Tensor& m : target_masks8)
    if (m.numel() != plane)
      throw ShapeError("match_cost: target mask resolution mismatch");

  CostMatrix cm;
  cm.total = Tensor::zeros({n, x_count});
  cm.cls = Tensor::zeros({n, x_count});
  cm.focal = Tensor::zeros({n, x_count});
  cm.dice = Tensor::zeros({n, x_count});
  for (int i = 0; i < n; ++i) {
    // -softmax(class logits)[human]; identical for every target of query i
    const double a = class_logits.at(i, 0), b = class_logits.at(i, 1);
    const double mx = std::max(a, b);
    const double pz = std::exp(b - mx) / (std::exp(a - mx) + std::exp(b - mx));
    const double* row = mask_logits.data() + i * plane;
    for (int x = 0; x < x_count; ++x) {
      const double c_cls = -pz;
      const double c_focal = focal_bce_value(row, target_masks8[static_cast<size_t>(x)], focal_gamma);
      const double c_dice = dice_value(row, target_masks8[static_cast<size_t>(x)]);
      cm.cls.at(i, x) = c_cls;
      cm.focal.at(i, x) = c_focal;
      cm.dice.at(i, x) = c_dice;
      cm.total.at(i, x) = c_cls + c_focal + c_dice;
    }
  }
  return cm;
}

Assignment assign(const CostMatrix& costs) { return solve_assignment(costs.total); }

std::pair<Var, Var> perception_loss(const Var& class_logits,
                                    const Var& mask_logits,
                                    const Assignment& assignment,
                                    const SupervisionTargets& targets,
                                    const LossWeights& weights) {
  const int n = class_logits.val().dim(0);
  std::vector<int> labels(static_cast<size_t>(n), 0);
  std::vector<double> w(static_cast<size_t>(n), weights.w_background);
  for (const auto& [qi, tx] : assignment.pairs) {
    labels[static_cast<size_t>(qi)] = 1;
    w[static_cast<size_t>(qi)] = weights.w_human;
  }
  Var l_cls = ops::ce_rows(class_logits, labels, w, static_cast<double>(n));

  const int h8 = mask_logits.val().dim(1), w8 = mask_logits.val().dim(2);
  std::vector<Var> seg_terms;
  for (const auto& [qi, tx] : assignment.pairs) {
    const Tensor& gt = targets.masks8[static_cast<size_t>(tx)];
    if (gt.dim(0) != h8 || gt.dim(1) != w8)
      throw ShapeError("perception_loss: stride-8 target mismatch");
    Var row = ops::reshape(ops::rows(mask_logits, qi, qi + 1), {h8, w8});
    Var focal = ops::focal_bce_logits(row, gt, weights.focal_gamma);
    Var dice = ops::dice_loss(ops::sigmoid(row), gt);
    seg_terms.push_back(ops::add(ops::scale(focal, weights.lambda_b),
                                 ops::scale(dice, weights.lambda_d)));
  }
  Var l_seg = seg_terms.empty()
                  ? Var(Tensor::scalar(0.0))
                  : ops::scale(ops::sum_all(ops::concat0(seg_terms)),
                               1.0 / static_cast<double>(seg_terms.size()));
  return {l_cls, l_seg};
}

std::pair<Var, Var> matting_loss(const Var& trimap_logits, const Var& alpha,
                                 const Tensor& unknown_pred,
                                 const Assignment& assignment,
                                 const SupervisionTargets& targets,
                                 const LossWeights& weights) {
  const int h = targets.height, w = targets.width;
  if (trimap_logits.val().rank() != 4 || trimap_logits.val().dim(1) != 3 ||
      trimap_logits.val().dim(2) != h || trimap_logits.val().dim(3) != w)
    throw ShapeError("matting_loss: trimap logits must be (N,3,H,W)");
  if (alpha.val().shape() !=
      std::vector<int>{trimap_logits.val().dim(0), 1, h, w})
    throw ShapeError("matting_loss: alpha must be (N,1,H,W), got " +
                     alpha.val().shape_str());
  check_same_shape(unknown_pred, alpha.val(), "matting_loss unknown_pred");
  const int64_t plane = static_cast<int64_t>(h) * w;

  std::vector<Var> tri_terms;
  std::vector<Var> pu_terms, gu_terms;
  double pu_norm = 0.0, gu_norm = 0.0;
  for (const auto& [qi, tx] : assignment.pairs) {
    const size_t x = static_cast<size_t>(tx);
    Var tri_row = ops::reshape(ops::rows(trimap_logits, qi, qi + 1),
                               {3, static_cast<int>(plane)});
    Tensor labels = targets.trimaps[x].reshaped({static_cast<int>(plane)});
    tri_terms.push_back(ops::focal_ce_multi(tri_row, labels, weights.focal_gamma));

    Var a_row = ops::reshape(ops::rows(alpha, qi, qi + 1), {h, w});
    Tensor u_pred_row = Tensor::zeros({h, w});
    const double* up = unknown_pred.data() + static_cast<int64_t>(qi) * plane;
    for (int64_t i = 0; i < plane; ++i) u_pred_row[i] = up[i];

    pu_terms.push_back(ops::masked_abs_sum(a_row, targets.alphas[x], u_pred_row));
    gu_terms.push_back(ops::masked_abs_sum(a_row, targets.alphas[x], targets.unknowns[x]));
    pu_norm += u_pred_row.sum();
    gu_norm += targets.unknowns[x].sum();
  }

  Var l_tri = ops::scale(ops::sum_all(ops::concat0(tri_terms)),
                         1.0 / static_cast<double>(tri_terms.size()));

  // each unknown-region MAE is guarded: an empty region contributes zero
  Var zero(Tensor::scalar(0.0));
  Var pu = pu_norm > 0.0
               ? ops::scale(ops::sum_all(ops::concat0(pu_terms)), 1.0 / pu_norm)
               : zero;
  Var gu = gu_norm > 0.0
               ? ops::scale(ops::sum_all(ops::concat0(gu_terms)), 1.0 / gu_norm)
               : zero;
  Var l_alpha = ops::add(ops::scale(pu, weights.lambda_pu),
                         ops::scale(gu, weights.lambda_gu));
  return {l_tri, l_alpha};
}

LossBreakdown compute_losses(const PredictionRefs& preds,
                             const Assignment& assignment,
                             const SupervisionTargets& targets,
                             const LossWeights& weights) {
  weights.validate();
  LossBreakdown out;
  auto [l_cls, l_seg] = perception_loss(preds.class_logits, preds.mask_logits,
                                        assignment, targets, weights);
  out.l_cls = l_cls;
  out.l_seg = l_seg;
  out.l_p = ops::add(ops::scale(out.l_cls, weights.lambda_c),
                     ops::scale(out.l_seg, weights.lambda_s));
  auto [l_tri, l_alpha] = matting_loss(preds.trimap_logits, preds.alpha,
                                       preds.unknown_pred, assignment, targets,
                                       weights);
  out.l_tri = l_tri;
  out.l_alpha = l_alpha;
  out.l_m = ops::add(ops::scale(out.l_tri, weights.lambda_t),
                     ops::scale(out.l_alpha, weights.lambda_alpha));
  out.l_total = ops::add(ops::scale(out.l_p, weights.lambda_p),
                         ops::scale(out.l_m, weights.lambda_m));
  return out;
}

}  // namespace him
