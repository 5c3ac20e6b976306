#include <cmath>
#include <string>
#include <vector>

#include "him/ops.hpp"

namespace him::ops {

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups,
               double eps) {
  const Tensor& xv = x.val();
  if (xv.shape().size() != 3)
    throw ShapeError("group_norm: expected CHW, got " + xv.shape_str());
  const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  if (groups < 1 || c % groups != 0)
    throw ShapeError("group_norm: channels " + std::to_string(c) +
                     " not divisible by groups " + std::to_string(groups));
  if (gamma.val().numel() != c || beta.val().numel() != c)
    throw ShapeError("group_norm: gamma/beta must have one entry per channel");
  const int cpg = c / groups;
  const int64_t plane = static_cast<int64_t>(h) * w;
  const int64_t m = cpg * plane;

  std::vector<double> mean(groups), inv_std(groups);
  Tensor y = Tensor::zeros(xv.shape());
  for (int g = 0; g < groups; ++g) {
    const double* src = xv.data() + static_cast<int64_t>(g) * m;
    double mu = 0.0;
    for (int64_t i = 0; i < m; ++i) mu += src[i];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (int64_t i = 0; i < m; ++i) {
      const double d = src[i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(m);
    mean[g] = mu;
    inv_std[g] = 1.0 / std::sqrt(var + eps);
  }
  for (int ch = 0; ch < c; ++ch) {
    const int g = ch / cpg;
    const double gm = gamma.val()[ch], bt = beta.val()[ch];
    const double* src = xv.data() + ch * plane;
    double* dst = y.data() + ch * plane;
    for (int64_t i = 0; i < plane; ++i)
      dst[i] = gm * (src[i] - mean[g]) * inv_std[g] + bt;
  }

  Tensor xt = xv, gt = gamma.val();
  return make_op(y, {x, gamma, beta},
                 [xt, gt, mean, inv_std, groups, cpg, plane, m, c](GraphNode& n) {
    const Tensor& g = n.grad;
    if (n.parents[1]->requires_grad || n.parents[2]->requires_grad) {
      Tensor& ggm = n.parents[1]->ensure_grad();
      Tensor& gbt = n.parents[2]->ensure_grad();
      for (int ch = 0; ch < c; ++ch) {
        const int grp = ch / cpg;
        const double* xs = xt.data() + ch * plane;
        const double* gs = g.data() + ch * plane;
        double sg = 0.0, sgx = 0.0;
        for (int64_t i = 0; i < plane; ++i) {
          sg += gs[i];
          sgx += gs[i] * (xs[i] - mean[grp]) * inv_std[grp];
        }
        gbt[ch] += sg;
        ggm[ch] += sgx;
      }
    }
    if (n.parents[0]->requires_grad) {
      Tensor& gx = n.parents[0]->ensure_grad();
      for (int grp = 0; grp < groups; ++grp) {
        // dxhat = g * gamma; dx = inv_std*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
        double s1 = 0.0, s2 = 0.0;
        for (int cc = 0; cc < cpg; ++cc) {
          const int ch = grp * cpg + cc;
          const double* xs = xt.data() + ch * plane;
          const double* gs = g.data() + ch * plane;
          const double gm = gt[ch];
          for (int64_t i = 0; i < plane; ++i) {
            const double xhat = (xs[i] - mean[grp]) * inv_std[grp];
            const double dxh = gs[i] * gm;
            s1 += dxh;
            s2 += dxh * xhat;
          }
        }
        s1 /= static_cast<double>(m);
        s2 /= static_cast<double>(m);
        for (int cc = 0; cc < cpg; ++cc) {
          const int ch = grp * cpg + cc;
          const double* xs = xt.data() + ch * plane;
          const double* gs = g.data() + ch * plane;
          double* gd = gx.data() + ch * plane;
          const double gm = gt[ch];
          for (int64_t i = 0; i < plane; ++i) {
            const double xhat = (xs[i] - mean[grp]) * inv_std[grp];
            gd[i] += inv_std[grp] * (gs[i] * gm - s1 - xhat * s2);
          }
        }
      }
    }
  });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Tensor& xv = x.val();
  if (xv.shape().size() != 2)
    throw ShapeError("layer_norm_rows: expected (R,C), got " + xv.shape_str());
  const int r = xv.dim(0), c = xv.dim(1);
  if (gamma.val().numel() != c || beta.val().numel() != c)
    throw ShapeError("layer_norm_rows: gamma/beta size must match feature dim");

  std::vector<double> mean(r), inv_std(r);
  Tensor y = Tensor::zeros(xv.shape());
  for (int i = 0; i < r; ++i) {
    const double* src = xv.data() + static_cast<int64_t>(i) * c;
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += src[j];
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double d = src[j] - mu;
      var += d * d;
    }
    var /= c;
    mean[i] = mu;
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    double* dst = y.data() + static_cast<int64_t>(i) * c;
    for (int j = 0; j < c; ++j)
      dst[j] = gamma.val()[j] * (src[j] - mu) * inv_std[i] + beta.val()[j];
  }

  Tensor xt = xv, gt = gamma.val();
  return make_op(y, {x, gamma, beta}, [xt, gt, mean, inv_std, r, c](GraphNode& n) {
    const Tensor& g = n.grad;
    if (n.parents[1]->requires_grad || n.parents[2]->requires_grad) {
      Tensor& ggm = n.parents[1]->ensure_grad();
      Tensor& gbt = n.parents[2]->ensure_grad();
      for (int i = 0; i < r; ++i) {
        const double* xs = xt.data() + static_cast<int64_t>(i) * c;
        const double* gs = g.data() + static_cast<int64_t>(i) * c;
        for (int j = 0; j < c; ++j) {
          gbt[j] += gs[j];
          ggm[j] += gs[j] * (xs[j] - mean[i]) * inv_std[i];
        }
      }
    }
    if (n.parents[0]->requires_grad) {
      Tensor& gx = n.parents[0]->ensure_grad();
      for (int i = 0; i < r; ++i) {
        const double* xs = xt.data() + static_cast<int64_t>(i) * c;
        const double* gs = g.data() + static_cast<int64_t>(i) * c;
        double* gd = gx.data() + static_cast<int64_t>(i) * c;
        double s1 = 0.0, s2 = 0.0;
        for (int j = 0; j < c; ++j) {
          const double xhat = (xs[j] - mean[i]) * inv_std[i];
          const double dxh = gs[j] * gt[j];
          s1 += dxh;
          s2 += dxh * xhat;
        }
        s1 /= c;
        s2 /= c;
        for (int j = 0; j < c; ++j) {
          const double xhat = (xs[j] - mean[i]) * inv_std[i];
          gd[j] += inv_std[i] * (gs[j] * gt[j] - s1 - xhat * s2);
        }
      }
    }
  });
}

Var softmax_rows(const Var& x) {
  const Tensor& xv = x.val();
  if (xv.shape().size() != 2)
    throw ShapeError("softmax_rows: expected (R,C), got " + xv.shape_str());
  const int r = xv.dim(0), c = xv.dim(1);
  Tensor y = Tensor::zeros(xv.shape());
  for (int i = 0; i < r; ++i) {
    const double* src = xv.data() + static_cast<int64_t>(i) * c;
    double* dst = y.data() + static_cast<int64_t>(i) * c;
    double mx = src[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, src[j]);
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      dst[j] = std::exp(src[j] - mx);
      s += dst[j];
    }
    const double inv = 1.0 / s;
    for (int j = 0; j < c; ++j) dst[j] *= inv;
  }
  return make_op(y, {x}, [r, c](GraphNode& n) {
    Tensor& gx = n.parents[0]->ensure_grad();
    for (int i = 0; i < r; ++i) {
      const double* ys = n.value.data() + static_cast<int64_t>(i) * c;
      const double* gs = n.grad.data() + static_cast<int64_t>(i) * c;
      double* gd = gx.data() + static_cast<int64_t>(i) * c;
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += gs[j] * ys[j];
      for (int j = 0; j < c; ++j) gd[j] += ys[j] * (gs[j] - dot);
    }
  });
}

Var softmax_dim0(const Var& x) {
  const Tensor& xv = x.val();
  if (xv.shape().size() != 2)
    throw ShapeError("softmax_dim0: expected (K,P), got " + xv.shape_str());
  const int k = xv.dim(0), p = xv.dim(1);
  Tensor y = Tensor::zeros(xv.shape());
  for (int j = 0; j < p; ++j) {
    double mx = xv[j];
    for (int i = 1; i < k; ++i)
      mx = std::max(mx, xv[static_cast<int64_t>(i) * p + j]);
    double s = 0.0;
    for (int i = 0; i < k; ++i) {
      const double e = std::exp(xv[static_cast<int64_t>(i) * p + j] - mx);
      y[static_cast<int64_t>(i) * p + j] = e;
      s += e;
    }
    const double inv = 1.0 / s;
    for (int i = 0; i < k; ++i) y[static_cast<int64_t>(i) * p + j] *= inv;
  }
  return make_op(y, {x}, [k, p](GraphNode& n) {
    Tensor& gx = n.parents[0]->ensure_grad();
    for (int j = 0; j < p; ++j) {
      double dot = 0.0;
      for (int i = 0; i < k; ++i)
        dot += n.grad[static_cast<int64_t>(i) * p + j] *
               n.value[static_cast<int64_t>(i) * p + j];
      for (int i = 0; i < k; ++i) {
        const int64_t idx = static_cast<int64_t>(i) * p + j;
        gx[idx] += n.value[idx] * (n.grad[idx] - dot);
      }
    }
  });
}

}  // namespace him::ops
