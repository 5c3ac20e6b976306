#pragma once

#include <string>
#include <vector>

#include "him/config.hpp"
#include "him/model.hpp"
#include "him/optimizer.hpp"
#include "him/scene.hpp"

namespace him {

// Per-step loss summary (batch means). Mirrors the JSONL log line exactly.
struct StepStats {
  int64_t step = 0;  // 1-based, value after the optimizer update
  double lr = 0.0;
  double l_cls = 0.0, l_seg = 0.0, l_tri = 0.0, l_alpha = 0.0, l_total = 0.0;
  double grad_norm = 0.0;  // pre-clip global L2 norm
};

// Deterministic single-threaded training loop. Every random choice (scene
// pick, augmentation, paste donor) is a pure function of (config seed, global
// sample index), so a resumed run continues the exact stream.
class Trainer {
 public:
  // scenes are the fixed training set (already loaded); out_dir receives the
  // log, checkpoints, and manifest. Empty out_dir disables all file output.
  Trainer(const RunConfig& cfg, std::vector<Scene> scenes, std::string out_dir);

  // One optimizer update (cfg.optim.batch_size accumulated samples).
  // Throws std::runtime_error after writing a diagnostic dump if the loss or
  // gradients go non-finite.
  StepStats step_once();

  // Runs from the current step to total_steps() with periodic logging and
  // checkpointing.
  void run();

  void save(const std::string& path) const;
  // Restores parameters, optimizer state, and step counter. The checkpoint's
  // config must match the trainer's; mismatch throws ConfigError.
  void resume(const std::string& path);

  int64_t step() const { return step_; }
  int64_t total_steps() const { return total_steps_; }
  E2EHim& model() { return model_; }
  const E2EHim& model() const { return model_; }
  AdamW& optimizer() { return opt_; }
  const RunConfig& config() const { return cfg_; }
  const std::vector<StepStats>& history() const { return history_; }

 private:
  Scene sample(int64_t index) const;  // deterministic pick + augment
  void log_line(const StepStats& s);
  void write_manifest() const;
  [[noreturn]] void abort_non_finite(const StepStats& s, int64_t sample_index);

  RunConfig cfg_;
  std::vector<Scene> scenes_;
  std::string out_dir_;
  E2EHim model_;
  AdamW opt_;
  int64_t step_ = 0;
  int64_t total_steps_ = 0;
  std::vector<StepStats> history_;
  std::vector<std::string> checkpoints_;  // relative names, for the manifest
};

}  // namespace him
