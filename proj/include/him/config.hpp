#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "him/augment.hpp"
#include "him/perception.hpp"
#include "him/scene_gen.hpp"
#include "him/supervision.hpp"

namespace him {

struct OptimConfig {
  std::string algorithm = "adamw";
  double lr = 8e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;
  std::string schedule = "cosine";
  int epochs = 40;
  int batch_size = 4;
  int steps = 0;  // > 0 overrides the epoch-derived step count
  double grad_clip = 10.0;
  int warmup_steps = 0;

  void validate() const;  // throws ConfigError
};

struct RunConfig {
  NetworkConfig model;
  LossWeights loss;
  SceneConfig data;
  AugmentConfig augment;
  OptimConfig optim;
  uint64_t seed = 1;
  int log_every = 10;
  int checkpoint_every = 500;

  void validate() const;
};

nlohmann::ordered_json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

// "toy": desk-scale defaults that train on a CPU. "full": the published
// recipe (640 crops, C=256, N=20, S=2, lr 8e-5, cosine over 40 epochs).
RunConfig run_config_preset(const std::string& name);

RunConfig load_run_config(const std::string& path);  // IoError / ConfigError

// Apply dotted-path overrides like "optim.lr=0.001" or "model.queries=20".
// Values parse as JSON scalars where possible, else as strings.
RunConfig apply_overrides(const RunConfig& cfg,
                          const std::vector<std::string>& sets);

}  // namespace him
