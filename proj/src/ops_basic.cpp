#include <cmath>
#include <cstring>
#include <string>

#include "him/ops.hpp"

namespace him::ops {

Var add(const Var& a, const Var& b) {
  check_same_shape(a.val(), b.val(), "add");
  Tensor y = a.val().clone();
  const double* pb = b.val().data();
  double* py = y.data();
  for (int64_t i = 0; i < y.numel(); ++i) py[i] += pb[i];
  return make_op(y, {a, b}, [](GraphNode& n) {
    const Tensor& g = n.grad;
    for (int k = 0; k < 2; ++k) {
      if (!n.parents[k]->requires_grad) continue;
      Tensor& gp = n.parents[k]->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) gp[i] += g[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a.val(), b.val(), "sub");
  Tensor y = a.val().clone();
  const double* pb = b.val().data();
  double* py = y.data();
  for (int64_t i = 0; i < y.numel(); ++i) py[i] -= pb[i];
  return make_op(y, {a, b}, [](GraphNode& n) {
    const Tensor& g = n.grad;
    if (n.parents[0]->requires_grad) {
      Tensor& ga = n.parents[0]->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& gb = n.parents[1]->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a.val(), b.val(), "mul");
  Tensor y = a.val().clone();
  const double* pb = b.val().data();
  double* py = y.data();
  for (int64_t i = 0; i < y.numel(); ++i) py[i] *= pb[i];
  Tensor av = a.val(), bv = b.val();
  return make_op(y, {a, b}, [av, bv](GraphNode& n) {
    const Tensor& g = n.grad;
    if (n.parents[0]->requires_grad) {
      Tensor& ga = n.parents[0]->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& gb = n.parents[1]->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& a, double c) {
  Tensor y = a.val().clone();
  double* py = y.data();
  for (int64_t i = 0; i < y.numel(); ++i) py[i] *= c;
  return make_op(y, {a}, [c](GraphNode& n) {
    Tensor& ga = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += c * n.grad[i];
  });
}

Var add_scalar(const Var& a, double c) {
  Tensor y = a.val().clone();
  double* py = y.data();
  for (int64_t i = 0; i < y.numel(); ++i) py[i] += c;
  return make_op(y, {a}, [](GraphNode& n) {
    Tensor& ga = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i];
  });
}

Var add_colvec(const Var& x, const Var& v) {
  const Tensor& xv = x.val();
  if (xv.shape().empty()) throw ShapeError("add_colvec: x must have rank >= 1");
  const int64_t r = xv.shape()[0];
  if (v.val().numel() != r)
    throw ShapeError("add_colvec: v numel " + std::to_string(v.val().numel()) +
                     " != dim0 " + std::to_string(r));
  const int64_t inner = xv.numel() / r;
  Tensor y = xv.clone();
  for (int64_t i = 0; i < r; ++i) {
    const double c = v.val()[i];
    double* row = y.data() + i * inner;
    for (int64_t j = 0; j < inner; ++j) row[j] += c;
  }
  return make_op(y, {x, v}, [r, inner](GraphNode& n) {
    const Tensor& g = n.grad;
    if (n.parents[0]->requires_grad) {
      Tensor& gx = n.parents[0]->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& gv = n.parents[1]->ensure_grad();
      for (int64_t i = 0; i < r; ++i) {
        double s = 0.0;
        const double* row = g.data() + i * inner;
        for (int64_t j = 0; j < inner; ++j) s += row[j];
        gv[i] += s;
      }
    }
  });
}

Var mul_rowvec(const Var& x, const Var& v) {
  const Tensor& xv = x.val();
  if (xv.shape().empty()) throw ShapeError("mul_rowvec: x must have rank >= 1");
  const int64_t r = xv.shape()[0];
  const int64_t inner = xv.numel() / r;
  if (v.val().numel() != inner)
    throw ShapeError("mul_rowvec: v numel " + std::to_string(v.val().numel()) +
                     " != inner size " + std::to_string(inner));
  Tensor y = xv.clone();
  for (int64_t i = 0; i < r; ++i) {
    double* row = y.data() + i * inner;
    for (int64_t j = 0; j < inner; ++j) row[j] *= v.val()[j];
  }
  Tensor xt = xv, vt = v.val();
  return make_op(y, {x, v}, [r, inner, xt, vt](GraphNode& n) {
    const Tensor& g = n.grad;
    if (n.parents[0]->requires_grad) {
      Tensor& gx = n.parents[0]->ensure_grad();
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < inner; ++j)
          gx[i * inner + j] += g[i * inner + j] * vt[j];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& gv = n.parents[1]->ensure_grad();
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < inner; ++j)
          gv[j] += g[i * inner + j] * xt[i * inner + j];
    }
  });
}

Var mul_const(const Var& x, const Tensor& c) {
  check_same_shape(x.val(), c, "mul_const");
  Tensor y = x.val().clone();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] *= c[i];
  Tensor ct = c;
  return make_op(y, {x}, [ct](GraphNode& n) {
    Tensor& gx = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i) gx[i] += n.grad[i] * ct[i];
  });
}

Var add_const(const Var& x, const Tensor& c) {
  check_same_shape(x.val(), c, "add_const");
  Tensor y = x.val().clone();
  for (int64_t i = 0; i < y.numel(); ++i) y[i] += c[i];
  return make_op(y, {x}, [](GraphNode& n) {
    Tensor& gx = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i) gx[i] += n.grad[i];
  });
}

Var reshape(const Var& x, std::vector<int> shape) {
  Tensor y = x.val().clone().reshaped(shape);
  return make_op(y, {x}, [](GraphNode& n) {
    Tensor& gx = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i) gx[i] += n.grad[i];
  });
}

Var transpose(const Var& x) {
  const Tensor& xv = x.val();
  if (xv.shape().size() != 2) throw ShapeError("transpose: rank-2 only, got " + xv.shape_str());
  const int64_t r = xv.shape()[0], c = xv.shape()[1];
  Tensor y = Tensor::zeros({static_cast<int>(c), static_cast<int>(r)});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) y[j * r + i] = xv[i * c + j];
  return make_op(y, {x}, [r, c](GraphNode& n) {
    Tensor& gx = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) gx[i * c + j] += n.grad[j * r + i];
  });
}

Var rows(const Var& x, int r0, int r1) {
  const Tensor& xv = x.val();
  if (xv.shape().empty()) throw ShapeError("rows: x must have rank >= 1");
  const int64_t r = xv.shape()[0];
  if (r0 < 0 || r1 > r || r0 >= r1)
    throw ShapeError("rows: bad slice [" + std::to_string(r0) + "," +
                     std::to_string(r1) + ") for dim0 " + std::to_string(r));
  const int64_t inner = xv.numel() / r;
  std::vector<int> shape = xv.shape();
  shape[0] = r1 - r0;
  Tensor y = Tensor::zeros(shape);
  std::memcpy(y.data(), xv.data() + r0 * inner,
              sizeof(double) * static_cast<size_t>((r1 - r0) * inner));
  return make_op(y, {x}, [r0, inner](GraphNode& n) {
    Tensor& gx = n.parents[0]->ensure_grad();
    double* dst = gx.data() + r0 * inner;
    for (int64_t i = 0; i < n.grad.numel(); ++i) dst[i] += n.grad[i];
  });
}

Var cols(const Var& x, int c0, int c1) {
  const Tensor& xv = x.val();
  if (xv.shape().size() != 2) throw ShapeError("cols: rank-2 only, got " + xv.shape_str());
  const int64_t r = xv.shape()[0], c = xv.shape()[1];
  if (c0 < 0 || c1 > c || c0 >= c1)
    throw ShapeError("cols: bad slice [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") for dim1 " + std::to_string(c));
  const int w = c1 - c0;
  Tensor y = Tensor::zeros({static_cast<int>(r), w});
  for (int64_t i = 0; i < r; ++i)
    std::memcpy(y.data() + i * w, xv.data() + i * c + c0,
                sizeof(double) * static_cast<size_t>(w));
  return make_op(y, {x}, [r, c, c0, w](GraphNode& n) {
    Tensor& gx = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < w; ++j) gx[i * c + c0 + j] += n.grad[i * w + j];
  });
}

Var concat0(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat0: empty input list");
  std::vector<int> shape = xs[0].val().shape();
  if (shape.empty()) throw ShapeError("concat0: inputs must have rank >= 1");
  int64_t dim0 = 0;
  for (const Var& x : xs) {
    const auto& s = x.val().shape();
    if (s.size() != shape.size())
      throw ShapeError("concat0: rank mismatch");
    for (size_t d = 1; d < s.size(); ++d)
      if (s[d] != shape[d]) throw ShapeError("concat0: trailing dims differ");
    dim0 += s[0];
  }
  shape[0] = static_cast<int>(dim0);
  Tensor y = Tensor::zeros(shape);
  int64_t off = 0;
  for (const Var& x : xs) {
    std::memcpy(y.data() + off, x.val().data(),
                sizeof(double) * static_cast<size_t>(x.val().numel()));
    off += x.val().numel();
  }
  std::vector<int64_t> sizes;
  for (const Var& x : xs) sizes.push_back(x.val().numel());
  return make_op(y, xs, [sizes](GraphNode& n) {
    int64_t off = 0;
    for (size_t k = 0; k < sizes.size(); ++k) {
      if (n.parents[k]->requires_grad) {
        Tensor& gp = n.parents[k]->ensure_grad();
        for (int64_t i = 0; i < sizes[k]; ++i) gp[i] += n.grad[off + i];
      }
      off += sizes[k];
    }
  });
}

Var concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_cols: empty input list");
  const int64_t r = xs[0].val().shape().size() == 2 ? xs[0].val().shape()[0] : -1;
  if (r < 0) throw ShapeError("concat_cols: rank-2 only");
  int64_t ctot = 0;
  for (const Var& x : xs) {
    if (x.val().shape().size() != 2 || x.val().shape()[0] != r)
      throw ShapeError("concat_cols: shape mismatch");
    ctot += x.val().shape()[1];
  }
  Tensor y = Tensor::zeros({static_cast<int>(r), static_cast<int>(ctot)});
  int64_t off = 0;
  for (const Var& x : xs) {
    const int64_t c = x.val().shape()[1];
    for (int64_t i = 0; i < r; ++i)
      std::memcpy(y.data() + i * ctot + off, x.val().data() + i * c,
                  sizeof(double) * static_cast<size_t>(c));
    off += c;
  }
  std::vector<int64_t> widths;
  for (const Var& x : xs) widths.push_back(x.val().shape()[1]);
  return make_op(y, xs, [r, ctot, widths](GraphNode& n) {
    int64_t off = 0;
    for (size_t k = 0; k < widths.size(); ++k) {
      const int64_t c = widths[k];
      if (n.parents[k]->requires_grad) {
        Tensor& gp = n.parents[k]->ensure_grad();
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < c; ++j)
            gp[i * c + j] += n.grad[i * ctot + off + j];
      }
      off += c;
    }
  });
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Var gelu(const Var& x) {
  Tensor y = x.val().clone();
  for (int64_t i = 0; i < y.numel(); ++i) {
    const double v = y[i];
    y[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  Tensor xv = x.val();
  return make_op(y, {x}, [xv](GraphNode& n) {
    Tensor& gx = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      gx[i] += n.grad[i] * (cdf + v * pdf);
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor y = x.val().clone();
  for (int64_t i = 0; i < y.numel(); ++i) {
    const double v = y[i];
    y[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                    : std::exp(v) / (1.0 + std::exp(v));
  }
  return make_op(y, {x}, [](GraphNode& n) {
    Tensor& gx = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i) {
      const double s = n.value[i];
      gx[i] += n.grad[i] * s * (1.0 - s);
    }
  });
}

Var clamp01(const Var& x) {
  Tensor y = x.val().clone();
  for (int64_t i = 0; i < y.numel(); ++i) {
    if (y[i] < 0.0) y[i] = 0.0;
    if (y[i] > 1.0) y[i] = 1.0;
  }
  Tensor xv = x.val();
  return make_op(y, {x}, [xv](GraphNode& n) {
    // gradient flows only strictly inside the clamp interval
    Tensor& gx = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      if (xv[i] > 0.0 && xv[i] < 1.0) gx[i] += n.grad[i];
  });
}

Var crop2d(const Var& x, int h, int w) {
  const Tensor& xv = x.val();
  if (xv.shape().size() != 3)
    throw ShapeError("crop2d: expected CHW, got " + xv.shape_str());
  const int c = xv.shape()[0], xh = xv.shape()[1], xw = xv.shape()[2];
  if (h < 1 || w < 1 || h > xh || w > xw)
    throw ShapeError("crop2d: window " + std::to_string(h) + "x" +
                     std::to_string(w) + " does not fit in " + xv.shape_str());
  if (h == xh && w == xw) return x;
  Tensor y = Tensor::zeros({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        y[(static_cast<int64_t>(ch) * h + i) * w + j] =
            xv[(static_cast<int64_t>(ch) * xh + i) * xw + j];
  return make_op(y, {x}, [c, h, w, xh, xw](GraphNode& n) {
    Tensor& gx = n.parents[0]->ensure_grad();
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          gx[(static_cast<int64_t>(ch) * xh + i) * xw + j] +=
              n.grad[(static_cast<int64_t>(ch) * h + i) * w + j];
  });
}

Var upsample_nearest2x(const Var& x) {
  const Tensor& xv = x.val();
  if (xv.shape().size() != 3)
    throw ShapeError("upsample_nearest2x: expected CHW, got " + xv.shape_str());
  const int c = xv.shape()[0], h = xv.shape()[1], w = xv.shape()[2];
  Tensor y = Tensor::zeros({c, 2 * h, 2 * w});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j)
        y[(static_cast<int64_t>(ch) * 2 * h + i) * 2 * w + j] =
            xv[(static_cast<int64_t>(ch) * h + i / 2) * w + j / 2];
  return make_op(y, {x}, [c, h, w](GraphNode& n) {
    Tensor& gx = n.parents[0]->ensure_grad();
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < 2 * h; ++i)
        for (int j = 0; j < 2 * w; ++j)
          gx[(static_cast<int64_t>(ch) * h + i / 2) * w + j / 2] +=
              n.grad[(static_cast<int64_t>(ch) * 2 * h + i) * 2 * w + j];
  });
}

namespace {
// source coordinate and bilinear weights for one output index (factor 2,
// align_corners=false); border samples clamp to the edge
struct Lerp {
  int i0, i1;
  double w0, w1;
};
Lerp lerp_coeff(int out, int in_size) {
  const double s = (out + 0.5) * 0.5 - 0.5;
  double f = std::floor(s);
  int i0 = static_cast<int>(f);
  double t = s - f;
  int i1 = i0 + 1;
  if (i0 < 0) { i0 = 0; i1 = 0; t = 0.0; }
  if (i1 >= in_size) { i1 = in_size - 1; if (i0 >= in_size) i0 = in_size - 1; }
  return {i0, i1, 1.0 - t, t};
}
}  // namespace

Var upsample_bilinear2x(const Var& x) {
  const Tensor& xv = x.val();
  if (xv.shape().size() != 3)
    throw ShapeError("upsample_bilinear2x: expected CHW, got " + xv.shape_str());
  const int c = xv.shape()[0], h = xv.shape()[1], w = xv.shape()[2];
  const int oh = 2 * h, ow = 2 * w;
  std::vector<Lerp> ly(oh), lx(ow);
  for (int i = 0; i < oh; ++i) ly[i] = lerp_coeff(i, h);
  for (int j = 0; j < ow; ++j) lx[j] = lerp_coeff(j, w);
  Tensor y = Tensor::zeros({c, oh, ow});
  for (int ch = 0; ch < c; ++ch) {
    const double* src = xv.data() + static_cast<int64_t>(ch) * h * w;
    double* dst = y.data() + static_cast<int64_t>(ch) * oh * ow;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j)
        dst[static_cast<int64_t>(i) * ow + j] =
            ly[i].w0 * (lx[j].w0 * src[static_cast<int64_t>(ly[i].i0) * w + lx[j].i0] +
                        lx[j].w1 * src[static_cast<int64_t>(ly[i].i0) * w + lx[j].i1]) +
            ly[i].w1 * (lx[j].w0 * src[static_cast<int64_t>(ly[i].i1) * w + lx[j].i0] +
                        lx[j].w1 * src[static_cast<int64_t>(ly[i].i1) * w + lx[j].i1]);
  }
  return make_op(y, {x}, [c, h, w, oh, ow, ly, lx](GraphNode& n) {
    Tensor& gx = n.parents[0]->ensure_grad();
    for (int ch = 0; ch < c; ++ch) {
      double* gsrc = gx.data() + static_cast<int64_t>(ch) * h * w;
      const double* gdst = n.grad.data() + static_cast<int64_t>(ch) * oh * ow;
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          const double g = gdst[static_cast<int64_t>(i) * ow + j];
          gsrc[static_cast<int64_t>(ly[i].i0) * w + lx[j].i0] += ly[i].w0 * lx[j].w0 * g;
          gsrc[static_cast<int64_t>(ly[i].i0) * w + lx[j].i1] += ly[i].w0 * lx[j].w1 * g;
          gsrc[static_cast<int64_t>(ly[i].i1) * w + lx[j].i0] += ly[i].w1 * lx[j].w0 * g;
          gsrc[static_cast<int64_t>(ly[i].i1) * w + lx[j].i1] += ly[i].w1 * lx[j].w1 * g;
        }
    }
  });
}

Var sum_all(const Var& x) {
  Tensor y = Tensor::scalar(x.val().sum());
  return make_op(y, {x}, [](GraphNode& n) {
    Tensor& gx = n.parents[0]->ensure_grad();
    const double g = n.grad[0];
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
  });
}

Var mean_all(const Var& x) {
  const double inv = 1.0 / static_cast<double>(x.val().numel());
  Tensor y = Tensor::scalar(x.val().sum() * inv);
  return make_op(y, {x}, [inv](GraphNode& n) {
    Tensor& gx = n.parents[0]->ensure_grad();
    const double g = n.grad[0] * inv;
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
  });
}

}  // namespace him::ops
