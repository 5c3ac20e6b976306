#include <Eigen/Core>

#include <string>

#include "him/ops.hpp"

namespace him::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

struct ConvDims {
  int ci, h, w, co, kh, kw, stride, pad, ho, wo;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  if (x.shape().size() != 3)
    throw ShapeError("conv2d: input must be CHW, got " + x.shape_str());
  if (w.shape().size() != 4)
    throw ShapeError("conv2d: weight must be (Co,Ci,Kh,Kw), got " + w.shape_str());
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: bad stride/pad");
  ConvDims d;
  d.ci = x.dim(0);
  d.h = x.dim(1);
  d.w = x.dim(2);
  d.co = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.pad = pad;
  if (w.dim(1) != d.ci)
    throw ShapeError("conv2d: weight expects " + std::to_string(w.dim(1)) +
                     " input channels, input has " + std::to_string(d.ci));
  d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
  d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.ho < 1 || d.wo < 1)
    throw ShapeError("conv2d: kernel larger than padded input (" + x.shape_str() + ")");
  return d;
}

// (Ci*Kh*Kw, Ho*Wo) patch matrix; out-of-bounds taps are zero
Tensor im2col(const Tensor& x, const ConvDims& d) {
  Tensor col = Tensor::zeros({d.ci * d.kh * d.kw, d.ho * d.wo});
  const int64_t q_total = static_cast<int64_t>(d.ho) * d.wo;
  for (int ci = 0; ci < d.ci; ++ci) {
    const double* src = x.data() + static_cast<int64_t>(ci) * d.h * d.w;
    for (int ky = 0; ky < d.kh; ++ky)
      for (int kx = 0; kx < d.kw; ++kx) {
        double* dst = col.data() + (static_cast<int64_t>(ci) * d.kh * d.kw +
                                    ky * d.kw + kx) * q_total;
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * d.stride + ky - d.pad;
          if (iy < 0 || iy >= d.h) continue;
          for (int ox = 0; ox < d.wo; ++ox) {
            const int ix = ox * d.stride + kx - d.pad;
            if (ix < 0 || ix >= d.w) continue;
            dst[static_cast<int64_t>(oy) * d.wo + ox] =
                src[static_cast<int64_t>(iy) * d.w + ix];
          }
        }
      }
  }
  return col;
}

void col2im_add(const Tensor& dcol, Tensor& gx, const ConvDims& d) {
  const int64_t q_total = static_cast<int64_t>(d.ho) * d.wo;
  for (int ci = 0; ci < d.ci; ++ci) {
    double* dst = gx.data() + static_cast<int64_t>(ci) * d.h * d.w;
    for (int ky = 0; ky < d.kh; ++ky)
      for (int kx = 0; kx < d.kw; ++kx) {
        const double* src = dcol.data() + (static_cast<int64_t>(ci) * d.kh * d.kw +
                                           ky * d.kw + kx) * q_total;
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * d.stride + ky - d.pad;
          if (iy < 0 || iy >= d.h) continue;
          for (int ox = 0; ox < d.wo; ++ox) {
            const int ix = ox * d.stride + kx - d.pad;
            if (ix < 0 || ix >= d.w) continue;
            dst[static_cast<int64_t>(iy) * d.w + ix] +=
                src[static_cast<int64_t>(oy) * d.wo + ox];
          }
        }
      }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const ConvDims d = conv_dims(x.val(), w.val(), stride, pad);
  const bool has_bias = b.defined();
  if (has_bias && b.val().numel() != d.co)
    throw ShapeError("conv2d: bias numel " + std::to_string(b.val().numel()) +
                     " != out channels " + std::to_string(d.co));
  const int64_t q = static_cast<int64_t>(d.ho) * d.wo;
  const int64_t kk = static_cast<int64_t>(d.ci) * d.kh * d.kw;

  Tensor col = im2col(x.val(), d);
  Tensor y = Tensor::zeros({d.co, d.ho, d.wo});
  MMap(y.data(), d.co, q).noalias() =
      CMap(w.val().data(), d.co, kk) * CMap(col.data(), kk, q);
  if (has_bias)
    for (int co = 0; co < d.co; ++co) {
      const double bias = b.val()[co];
      double* row = y.data() + co * q;
      for (int64_t i = 0; i < q; ++i) row[i] += bias;
    }

  Tensor xv = x.val(), wv = w.val();
  std::vector<Var> parents = has_bias ? std::vector<Var>{x, w, b}
                                      : std::vector<Var>{x, w};
  // im2col is recomputed in backward instead of kept alive on the tape
  return make_op(y, parents, [xv, wv, d, q, kk, has_bias](GraphNode& n) {
    CMap g(n.grad.data(), d.co, q);
    const bool need_x = n.parents[0]->requires_grad;
    const bool need_w = n.parents[1]->requires_grad;
    if (need_w) {
      Tensor col = im2col(xv, d);
      Tensor& gw = n.parents[1]->ensure_grad();
      MMap(gw.data(), d.co, kk).noalias() += g * CMap(col.data(), kk, q).transpose();
    }
    if (need_x) {
      Tensor dcol = Tensor::zeros({static_cast<int>(kk), static_cast<int>(q)});
      MMap(dcol.data(), kk, q).noalias() =
          CMap(wv.data(), d.co, kk).transpose() * g;
      col2im_add(dcol, n.parents[0]->ensure_grad(), d);
    }
    if (has_bias && n.parents[2]->requires_grad) {
      Tensor& gb = n.parents[2]->ensure_grad();
      for (int co = 0; co < d.co; ++co) {
        double s = 0.0;
        const double* row = n.grad.data() + co * q;
        for (int64_t i = 0; i < q; ++i) s += row[i];
        gb[co] += s;
      }
    }
  });
}

}  // namespace him::ops
