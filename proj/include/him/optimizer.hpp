#pragma once

#include <vector>

#include "him/config.hpp"
#include "him/nn.hpp"

namespace him {

// Cosine annealing from base_lr to zero over total_steps, with an optional
// linear warmup from zero. step counts from 0.
double scheduled_lr(const OptimConfig& cfg, int64_t step, int64_t total_steps);

// Scales all gradients so their global L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_grad_norm(const nn::ParamSet& params, double max_norm);

// AdamW with decoupled weight decay. First and second moments per parameter,
// bias-corrected; decay applies directly to the weights.
class AdamW {
 public:
  AdamW(nn::ParamSet& params, const OptimConfig& cfg);

  void step(double lr);
  int64_t step_count() const { return t_; }

  // flat state access for checkpointing, ordered as the ParamSet
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  void set_step_count(int64_t t) { t_ = t; }

 private:
  nn::ParamSet& params_;
  OptimConfig cfg_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
};

}  // namespace him
