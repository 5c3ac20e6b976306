#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "him/graph.hpp"
#include "him/rng.hpp"

// Central finite differences against the analytic backward pass. fn must
// rebuild its graph from the inputs' current values on every call and return
// a scalar. Each element of each input is perturbed in turn.
struct GradCheckResult {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  int64_t checked = 0;
  bool ok = true;
  std::string worst;
};

inline GradCheckResult gradcheck(const std::function<him::Var()>& fn,
                                 const std::vector<him::Var>& inputs,
                                 double eps = 1e-5, double tol_abs = 1e-7,
                                 double tol_rel = 1e-4) {
  using him::Tensor;
  GradCheckResult res;

  for (const him::Var& in : inputs) in.zero_grad();
  him::Var loss = fn();
  him::backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(inputs.size());
  for (const him::Var& in : inputs) analytic.push_back(in.grad().clone());

  him::NoGradGuard ng;
  for (size_t t = 0; t < inputs.size(); ++t) {
    Tensor x = inputs[t].node()->value;  // shared storage: in-place perturbation
    for (int64_t i = 0; i < x.numel(); ++i) {
      const double v = x[i];
      const double h = eps * std::max(1.0, std::abs(v));
      x[i] = v + h;
      const double lp = fn().scalar();
      x[i] = v - h;
      const double lm = fn().scalar();
      x[i] = v;
      const double num = (lp - lm) / (2.0 * h);
      const double ana = analytic[t][i];
      const double abs_err = std::abs(num - ana);
      const double denom = std::max(std::abs(num), std::abs(ana));
      const double rel_err = denom > 0.0 ? abs_err / denom : 0.0;
      ++res.checked;
      if (abs_err > res.max_abs_err) res.max_abs_err = abs_err;
      if (rel_err > res.max_rel_err && abs_err > tol_abs) res.max_rel_err = rel_err;
      if (abs_err > tol_abs && rel_err > tol_rel) {
        res.ok = false;
        std::ostringstream os;
        os << "input " << t << " elem " << i << ": analytic " << ana
           << " vs numeric " << num;
        res.worst = os.str();
      }
    }
  }
  return res;
}

inline him::Tensor random_tensor(std::vector<int> shape, him::Rng& rng,
                                 double lo = -1.0, double hi = 1.0) {
  him::Tensor t = him::Tensor::zeros(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}
