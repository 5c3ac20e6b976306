#include <cmath>
#include <string>
#include <vector>

#include "him/ops.hpp"

namespace him::ops {

namespace {

double stable_sigmoid(double v) {
  return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

// d/dp_t of (1-p_t)^gamma * (-log(p_t+eps))
double focal_dpt(double pt, double u, double gamma, double eps) {
  double term = -std::pow(u, gamma) / (pt + eps);
  if (gamma > 0.0) term += gamma * std::pow(u, gamma - 1.0) * std::log(pt + eps);
  return term;
}

}  // namespace

Var focal_bce_logits(const Var& z, const Tensor& target, double gamma, double eps) {
  check_same_shape(z.val(), target, "focal_bce_logits");
  const int64_t n_el = z.val().numel();
  if (n_el == 0) throw ShapeError("focal_bce_logits: empty input");
  double loss = 0.0;
  for (int64_t i = 0; i < n_el; ++i) {
    const double p = stable_sigmoid(z.val()[i]);
    const double pt = target[i] > 0.5 ? p : 1.0 - p;
    loss += std::pow(1.0 - pt, gamma) * (-std::log(pt + eps));
  }
  loss /= static_cast<double>(n_el);
  Tensor zv = z.val(), tv = target;
  return make_op(Tensor::scalar(loss), {z}, [zv, tv, gamma, eps, n_el](GraphNode& n) {
    Tensor& gz = n.parents[0]->ensure_grad();
    const double gout = n.grad[0] / static_cast<double>(n_el);
    for (int64_t i = 0; i < n_el; ++i) {
      const double p = stable_sigmoid(zv[i]);
      const bool pos = tv[i] > 0.5;
      const double pt = pos ? p : 1.0 - p;
      const double dpt_dz = (pos ? 1.0 : -1.0) * p * (1.0 - p);
      gz[i] += gout * focal_dpt(pt, 1.0 - pt, gamma, eps) * dpt_dz;
    }
  });
}

Var dice_loss(const Var& p, const Tensor& target, double eps) {
  check_same_shape(p.val(), target, "dice_loss");
  const int64_t n_el = p.val().numel();
  double inter = 0.0, sp = 0.0, st = 0.0;
  for (int64_t i = 0; i < n_el; ++i) {
    inter += p.val()[i] * target[i];
    sp += p.val()[i];
    st += target[i];
  }
  const double a = 2.0 * inter + eps;
  const double b = sp + st + eps;
  Tensor tv = target;
  return make_op(Tensor::scalar(1.0 - a / b), {p}, [tv, a, b, n_el](GraphNode& n) {
    Tensor& gp = n.parents[0]->ensure_grad();
    const double g = n.grad[0];
    const double inv_b2 = 1.0 / (b * b);
    for (int64_t i = 0; i < n_el; ++i)
      gp[i] += g * (a - 2.0 * tv[i] * b) * inv_b2;
  });
}

Var ce_rows(const Var& logits, const std::vector<int>& labels,
            const std::vector<double>& weights, double norm) {
  const Tensor& lv = logits.val();
  if (lv.shape().size() != 2)
    throw ShapeError("ce_rows: expected (R,K), got " + lv.shape_str());
  const int r = lv.dim(0), k = lv.dim(1);
  if (static_cast<int>(labels.size()) != r || static_cast<int>(weights.size()) != r)
    throw ShapeError("ce_rows: labels/weights must have one entry per row");
  if (norm <= 0.0) throw ShapeError("ce_rows: norm must be positive");
  for (int lbl : labels)
    if (lbl < 0 || lbl >= k) throw ShapeError("ce_rows: label out of range");

  double loss = 0.0;
  for (int i = 0; i < r; ++i) {
    const double* row = lv.data() + static_cast<int64_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double lse = 0.0;
    for (int j = 0; j < k; ++j) lse += std::exp(row[j] - mx);
    loss += weights[i] * (mx + std::log(lse) - row[labels[i]]);
  }
  loss /= norm;
  Tensor lt = lv;
  return make_op(Tensor::scalar(loss), {logits},
                 [lt, labels, weights, norm, r, k](GraphNode& n) {
    Tensor& gl = n.parents[0]->ensure_grad();
    const double gout = n.grad[0] / norm;
    for (int i = 0; i < r; ++i) {
      const double* row = lt.data() + static_cast<int64_t>(i) * k;
      double* gd = gl.data() + static_cast<int64_t>(i) * k;
      double mx = row[0];
      for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
      double s = 0.0;
      for (int j = 0; j < k; ++j) s += std::exp(row[j] - mx);
      const double wi = gout * weights[i];
      for (int j = 0; j < k; ++j) {
        const double q = std::exp(row[j] - mx) / s;
        gd[j] += wi * (q - (j == labels[i] ? 1.0 : 0.0));
      }
    }
  });
}

Var focal_ce_multi(const Var& logits, const Tensor& labels, double gamma,
                   double eps) {
  const Tensor& lv = logits.val();
  if (lv.shape().size() != 2)
    throw ShapeError("focal_ce_multi: expected (K,P), got " + lv.shape_str());
  const int k = lv.dim(0), p = lv.dim(1);
  if (labels.numel() != p)
    throw ShapeError("focal_ce_multi: one label per column required");
  std::vector<int> lab(p);
  for (int j = 0; j < p; ++j) {
    const double v = labels[j];
    const int li = static_cast<int>(std::lround(v));
    if (std::abs(v - li) > 1e-9 || li < 0 || li >= k)
      throw ShapeError("focal_ce_multi: label must be an integer in [0,K)");
    lab[j] = li;
  }

  double loss = 0.0;
  for (int j = 0; j < p; ++j) {
    double mx = lv[j];
    for (int i = 1; i < k; ++i)
      mx = std::max(mx, lv[static_cast<int64_t>(i) * p + j]);
    double s = 0.0;
    for (int i = 0; i < k; ++i)
      s += std::exp(lv[static_cast<int64_t>(i) * p + j] - mx);
    const double pt = std::exp(lv[static_cast<int64_t>(lab[j]) * p + j] - mx) / s;
    loss += std::pow(1.0 - pt, gamma) * (-std::log(pt + eps));
  }
  loss /= static_cast<double>(p);
  Tensor lt = lv;
  return make_op(Tensor::scalar(loss), {logits},
                 [lt, lab, gamma, eps, k, p](GraphNode& n) {
    Tensor& gl = n.parents[0]->ensure_grad();
    const double gout = n.grad[0] / static_cast<double>(p);
    std::vector<double> q(k);
    for (int j = 0; j < p; ++j) {
      double mx = lt[j];
      for (int i = 1; i < k; ++i)
        mx = std::max(mx, lt[static_cast<int64_t>(i) * p + j]);
      double s = 0.0;
      for (int i = 0; i < k; ++i) {
        q[i] = std::exp(lt[static_cast<int64_t>(i) * p + j] - mx);
        s += q[i];
      }
      for (int i = 0; i < k; ++i) q[i] /= s;
      const double pt = q[lab[j]];
      const double dpt = focal_dpt(pt, 1.0 - pt, gamma, eps);
      for (int i = 0; i < k; ++i)
        gl[static_cast<int64_t>(i) * p + j] +=
            gout * dpt * pt * ((i == lab[j] ? 1.0 : 0.0) - q[i]);
    }
  });
}

Var masked_abs_sum(const Var& pred, const Tensor& target, const Tensor& mask) {
  check_same_shape(pred.val(), target, "masked_abs_sum pred/target");
  check_same_shape(pred.val(), mask, "masked_abs_sum pred/mask");
  const int64_t n_el = pred.val().numel();
  double s = 0.0;
  for (int64_t i = 0; i < n_el; ++i)
    s += mask[i] * std::abs(pred.val()[i] - target[i]);
  Tensor pv = pred.val(), tv = target, mv = mask;
  return make_op(Tensor::scalar(s), {pred}, [pv, tv, mv, n_el](GraphNode& n) {
    Tensor& gp = n.parents[0]->ensure_grad();
    const double g = n.grad[0];
    for (int64_t i = 0; i < n_el; ++i) {
      const double d = pv[i] - tv[i];
      if (d > 0.0) gp[i] += g * mv[i];
      else if (d < 0.0) gp[i] -= g * mv[i];
    }
  });
}

}  // namespace him::ops
