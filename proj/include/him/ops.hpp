#pragma once

#include <vector>

#include "him/graph.hpp"

// Differentiable tensor ops. Shapes are checked up front and violations throw
// ShapeError. Every op is single-threaded and deterministic.
namespace him::ops {

// ---- elementwise / structure ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
// y[r, ...] = x[r, ...] + v[r]   (v has numel == dim0 of x)
Var add_colvec(const Var& x, const Var& v);
// y[r, p] = x[r, p] * v[p]
Var mul_rowvec(const Var& x, const Var& v);
// elementwise with a constant (no gradient into the constant)
Var mul_const(const Var& x, const Tensor& c);
Var add_const(const Var& x, const Tensor& c);

Var reshape(const Var& x, std::vector<int> shape);
Var transpose(const Var& x);                      // rank-2
Var rows(const Var& x, int r0, int r1);           // slice along dim0 (copy)
Var cols(const Var& x, int c0, int c1);           // rank-2 column slice (copy)
Var concat0(const std::vector<Var>& xs);          // concat along dim0
Var concat_cols(const std::vector<Var>& xs);      // rank-2 concat along dim1

// ---- activations ----
Var gelu(const Var& x);
Var sigmoid(const Var& x);
Var clamp01(const Var& x);

// ---- matmul family (rank-2) ----
Var mm(const Var& a, const Var& b);     // (M,K)x(K,N)
Var mm_tn(const Var& a, const Var& b);  // a^T b: (K,M),(K,N)->(M,N)
Var mm_nt(const Var& a, const Var& b);  // a b^T: (M,K),(N,K)->(M,N)
// y = x w^T + b; x (R,Ci), w (Co,Ci), b (Co) or undefined
Var linear(const Var& x, const Var& w, const Var& b);

// ---- normalization / softmax ----
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups,
               double eps = 1e-5);  // x (C,H,W)
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta,
                    double eps = 1e-5);  // x (R,C)
Var softmax_rows(const Var& x);          // (R,C), softmax per row
Var softmax_dim0(const Var& x);          // (K,P), softmax per column

// ---- conv / resampling (maps are CHW) ----
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var upsample_nearest2x(const Var& x);
Var upsample_bilinear2x(const Var& x);  // align_corners=false convention
Var crop2d(const Var& x, int h, int w);  // top-left h x w window of CHW

// ---- reductions ----
Var sum_all(const Var& x);   // -> scalar
Var mean_all(const Var& x);  // -> scalar

// ---- losses (fused, scalar outputs) ----
// mean over elements of (1-p_t)^gamma * (-log(p_t+eps)), p = sigmoid(z)
Var focal_bce_logits(const Var& z, const Tensor& target, double gamma,
                     double eps = 1e-8);
// 1 - (2*sum(p*t)+eps)/(sum(p)+sum(t)+eps), p expected in [0,1]
Var dice_loss(const Var& p, const Tensor& target, double eps = 1.0);
// sum_r w[r] * CE(logits[r], labels[r]) / norm
Var ce_rows(const Var& logits, const std::vector<int>& labels,
            const std::vector<double>& weights, double norm);
// logits (K,P), labels (P) in {0..K-1}; mean over columns of the focal CE
Var focal_ce_multi(const Var& logits, const Tensor& labels, double gamma,
                   double eps = 1e-8);
// sum over elements of mask * |pred - target|
Var masked_abs_sum(const Var& pred, const Tensor& target, const Tensor& mask);

}  // namespace him::ops
