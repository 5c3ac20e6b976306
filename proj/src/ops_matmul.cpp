#include <Eigen/Core>

#include <string>

#include "him/ops.hpp"

namespace him::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

void require_rank2(const Tensor& t, const char* what) {
  if (t.shape().size() != 2)
    throw ShapeError(std::string(what) + ": rank-2 tensor required, got " + t.shape_str());
}

}  // namespace

Var mm(const Var& a, const Var& b) {
  require_rank2(a.val(), "mm lhs");
  require_rank2(b.val(), "mm rhs");
  const int64_t m = a.val().shape()[0], k = a.val().shape()[1];
  const int64_t k2 = b.val().shape()[0], n2 = b.val().shape()[1];
  if (k != k2)
    throw ShapeError("mm: inner dims differ: " + a.val().shape_str() + " x " +
                     b.val().shape_str());
  Tensor y = Tensor::zeros({static_cast<int>(m), static_cast<int>(n2)});
  MMap(y.data(), m, n2).noalias() =
      CMap(a.val().data(), m, k) * CMap(b.val().data(), k2, n2);
  Tensor av = a.val(), bv = b.val();
  return make_op(y, {a, b}, [av, bv, m, k, n2](GraphNode& n) {
    CMap g(n.grad.data(), m, n2);
    if (n.parents[0]->requires_grad) {
      Tensor& ga = n.parents[0]->ensure_grad();
      MMap(ga.data(), m, k).noalias() += g * CMap(bv.data(), k, n2).transpose();
    }
    if (n.parents[1]->requires_grad) {
      Tensor& gb = n.parents[1]->ensure_grad();
      MMap(gb.data(), k, n2).noalias() += CMap(av.data(), m, k).transpose() * g;
    }
  });
}

Var mm_tn(const Var& a, const Var& b) {
  require_rank2(a.val(), "mm_tn lhs");
  require_rank2(b.val(), "mm_tn rhs");
  const int64_t k = a.val().shape()[0], m = a.val().shape()[1];
  const int64_t k2 = b.val().shape()[0], n2 = b.val().shape()[1];
  if (k != k2)
    throw ShapeError("mm_tn: leading dims differ: " + a.val().shape_str() +
                     " vs " + b.val().shape_str());
  Tensor y = Tensor::zeros({static_cast<int>(m), static_cast<int>(n2)});
  MMap(y.data(), m, n2).noalias() =
      CMap(a.val().data(), k, m).transpose() * CMap(b.val().data(), k2, n2);
  Tensor av = a.val(), bv = b.val();
  return make_op(y, {a, b}, [av, bv, k, m, n2](GraphNode& n) {
    CMap g(n.grad.data(), m, n2);
    if (n.parents[0]->requires_grad) {
      Tensor& ga = n.parents[0]->ensure_grad();
      MMap(ga.data(), k, m).noalias() += CMap(bv.data(), k, n2) * g.transpose();
    }
    if (n.parents[1]->requires_grad) {
      Tensor& gb = n.parents[1]->ensure_grad();
      MMap(gb.data(), k, n2).noalias() += CMap(av.data(), k, m) * g;
    }
  });
}

Var mm_nt(const Var& a, const Var& b) {
  require_rank2(a.val(), "mm_nt lhs");
  require_rank2(b.val(), "mm_nt rhs");
  const int64_t m = a.val().shape()[0], k = a.val().shape()[1];
  const int64_t n2 = b.val().shape()[0], k2 = b.val().shape()[1];
  if (k != k2)
    throw ShapeError("mm_nt: inner dims differ: " + a.val().shape_str() +
                     " vs " + b.val().shape_str());
  Tensor y = Tensor::zeros({static_cast<int>(m), static_cast<int>(n2)});
  MMap(y.data(), m, n2).noalias() =
      CMap(a.val().data(), m, k) * CMap(b.val().data(), n2, k2).transpose();
  Tensor av = a.val(), bv = b.val();
  return make_op(y, {a, b}, [av, bv, m, k, n2](GraphNode& n) {
    CMap g(n.grad.data(), m, n2);
    if (n.parents[0]->requires_grad) {
      Tensor& ga = n.parents[0]->ensure_grad();
      MMap(ga.data(), m, k).noalias() += g * CMap(bv.data(), n2, k);
    }
    if (n.parents[1]->requires_grad) {
      Tensor& gb = n.parents[1]->ensure_grad();
      MMap(gb.data(), n2, k).noalias() += g.transpose() * CMap(av.data(), m, k);
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require_rank2(x.val(), "linear x");
  require_rank2(w.val(), "linear w");
  const int64_t r = x.val().shape()[0], ci = x.val().shape()[1];
  const int64_t co = w.val().shape()[0], ci2 = w.val().shape()[1];
  if (ci != ci2)
    throw ShapeError("linear: x " + x.val().shape_str() + " incompatible with w " +
                     w.val().shape_str());
  const bool has_bias = b.defined();
  if (has_bias && b.val().numel() != co)
    throw ShapeError("linear: bias numel " + std::to_string(b.val().numel()) +
                     " != out features " + std::to_string(co));
  Tensor y = Tensor::zeros({static_cast<int>(r), static_cast<int>(co)});
  MMap ym(y.data(), r, co);
  ym.noalias() = CMap(x.val().data(), r, ci) * CMap(w.val().data(), co, ci).transpose();
  if (has_bias)
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < co; ++j) y[i * co + j] += b.val()[j];
  Tensor xv = x.val(), wv = w.val();
  std::vector<Var> parents = has_bias ? std::vector<Var>{x, w, b}
                                      : std::vector<Var>{x, w};
  return make_op(y, parents, [xv, wv, r, ci, co, has_bias](GraphNode& n) {
    CMap g(n.grad.data(), r, co);
    if (n.parents[0]->requires_grad) {
      Tensor& gx = n.parents[0]->ensure_grad();
      MMap(gx.data(), r, ci).noalias() += g * CMap(wv.data(), co, ci);
    }
    if (n.parents[1]->requires_grad) {
      Tensor& gw = n.parents[1]->ensure_grad();
      MMap(gw.data(), co, ci).noalias() += g.transpose() * CMap(xv.data(), r, ci);
    }
    if (has_bias && n.parents[2]->requires_grad) {
      Tensor& gb = n.parents[2]->ensure_grad();
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < co; ++j) gb[j] += n.grad[i * co + j];
    }
  });
}

}  // namespace him::ops
