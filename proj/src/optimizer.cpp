#include "him/optimizer.hpp"

#include <cmath>

namespace him {

double scheduled_lr(const OptimConfig& cfg, int64_t step, int64_t total_steps) {
  if (step < 0 || total_steps < 1)
    throw ConfigError("schedule needs step >= 0 and total_steps >= 1");
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
    return cfg.lr * static_cast<double>(step + 1) / cfg.warmup_steps;
  if (cfg.schedule == "constant") return cfg.lr;
  const int64_t s0 = cfg.warmup_steps;
  const double span = static_cast<double>(std::max<int64_t>(1, total_steps - s0));
  const double t = static_cast<double>(std::min(step - s0, total_steps - s0)) / span;
  return cfg.lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

double clip_grad_norm(const nn::ParamSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, v] : params.items()) {
    const Tensor& g = v.grad();
    for (int64_t i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (const auto& [name, v] : params.items()) {
      Tensor& g = v.grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] *= scale;
    }
  }
  return norm;
}

AdamW::AdamW(nn::ParamSet& params, const OptimConfig& cfg)
    : params_(params), cfg_(cfg) {
  cfg_.validate();
  for (const auto& [name, v] : params_.items()) {
    m_.push_back(Tensor::zeros(v.val().shape()));
    v_.push_back(Tensor::zeros(v.val().shape()));
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  size_t idx = 0;
  for (const auto& [name, var] : params_.items()) {
    Tensor& p = var.node()->value;
    const Tensor& g = var.grad();
    Tensor& m = m_[idx];
    Tensor& v = v_[idx];
    ++idx;
    for (int64_t i = 0; i < p.numel(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                    cfg_.weight_decay * p[i]);
    }
  }
}

}  // namespace him
