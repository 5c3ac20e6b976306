#include "him/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <utility>

#include "him/checkpoint.hpp"
#include "him/ops.hpp"
#include "him/supervision.hpp"
#include "json.hpp"

namespace him {

namespace {

// Salts for the independent per-sample random streams.
constexpr uint64_t kAugmentStream = 1;
constexpr uint64_t kPickStream = 2;
constexpr uint64_t kDonorStream = 3;

bool all_finite(const Tensor& t) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

int64_t derive_total_steps(const OptimConfig& optim, size_t n_scenes) {
  if (optim.steps > 0) return optim.steps;
  int64_t per_epoch =
      (static_cast<int64_t>(n_scenes) + optim.batch_size - 1) / optim.batch_size;
  if (per_epoch < 1) per_epoch = 1;
  return per_epoch * optim.epochs;
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg, std::vector<Scene> scenes,
                 std::string out_dir)
    : cfg_(cfg),
      scenes_(std::move(scenes)),
      out_dir_(std::move(out_dir)),
      model_(cfg.model, cfg.seed),
      opt_(model_.params(), cfg.optim) {
  cfg_.validate();
  if (scenes_.empty()) throw ConfigError("trainer needs at least one scene");
  for (const Scene& s : scenes_)
    cfg_.augment.validate(s.height(), s.width());
  total_steps_ = derive_total_steps(cfg_.optim, scenes_.size());
  if (!out_dir_.empty()) {
    std::filesystem::create_directories(out_dir_);
    std::ofstream cf(out_dir_ + "/config.json", std::ios::trunc);
    if (!cf) throw IoError("cannot write " + out_dir_ + "/config.json");
    cf << run_config_to_json(cfg_).dump(2) << "\n";
  }
}

Scene Trainer::sample(int64_t index) const {
  uint64_t idx = static_cast<uint64_t>(index);
  int pick = Rng(cfg_.seed)
                 .fork(kPickStream)
                 .fork(idx)
                 .uniform_int(0, static_cast<int>(scenes_.size()) - 1);
  int donor = Rng(cfg_.seed)
                  .fork(kDonorStream)
                  .fork(idx)
                  .uniform_int(0, static_cast<int>(scenes_.size()) - 1);
  uint64_t aug_seed = Rng(cfg_.seed).fork(kAugmentStream).fork(idx).next_u64();
  return augment(scenes_[static_cast<size_t>(pick)], cfg_.augment, aug_seed,
                 &scenes_[static_cast<size_t>(donor)]);
}

StepStats Trainer::step_once() {
  if (step_ >= total_steps_)
    throw ConfigError("training already ran its full schedule");
  const int batch = cfg_.optim.batch_size;
  StepStats stats;
  stats.lr = scheduled_lr(cfg_.optim, step_, total_steps_);

  model_.params().zero_grads();
  int64_t base = step_ * batch;
  for (int b = 0; b < batch; ++b) {
    Scene s = sample(base + b);
    SupervisionTargets targets =
        build_targets(s, cfg_.augment.alpha_lo, cfg_.augment.alpha_hi,
                      cfg_.augment.trimap_dilate);
    ModelOutputs out = model_.forward(s.image);
    // Matching rejects non-finite costs on its own; detect the poisoned
    // forward here so the abort path still writes its diagnostic dump.
    if (!all_finite(out.aux.class_logits.val()) ||
        !all_finite(out.aux.mask_logits.val()))
      abort_non_finite(stats, base + b);
    CostMatrix costs =
        match_cost(out.aux.class_logits.val(), out.aux.mask_logits.val(),
                   targets.masks8, cfg_.loss.focal_gamma);
    Assignment a = assign(costs);
    PredictionRefs refs;
    refs.class_logits = out.aux.class_logits;
    refs.mask_logits = out.aux.mask_logits;
    refs.trimap_logits = out.instances.trimap_logits;
    refs.alpha = out.instances.alpha_pred;
    refs.unknown_pred = out.instances.unknown;
    LossBreakdown lb = compute_losses(refs, a, targets, cfg_.loss);

    stats.l_cls += lb.l_cls.scalar() / batch;
    stats.l_seg += lb.l_seg.scalar() / batch;
    stats.l_tri += lb.l_tri.scalar() / batch;
    stats.l_alpha += lb.l_alpha.scalar() / batch;
    stats.l_total += lb.l_total.scalar() / batch;
    if (!std::isfinite(lb.l_total.scalar())) abort_non_finite(stats, base + b);
    // Scaled backward accumulates the batch-mean gradient across samples.
    backward(ops::scale(lb.l_total, 1.0 / batch));
  }

  stats.grad_norm = clip_grad_norm(model_.params(), cfg_.optim.grad_clip);
  if (!std::isfinite(stats.grad_norm)) abort_non_finite(stats, base);
  opt_.step(stats.lr);

  ++step_;
  stats.step = step_;
  return stats;
}

void Trainer::run() {
  std::filesystem::path dir(out_dir_);
  while (step_ < total_steps_) {
    StepStats s = step_once();
    bool log_now = cfg_.log_every > 0 && (s.step % cfg_.log_every == 0 ||
                                          s.step == total_steps_);
    if (log_now) log_line(s);
    if (!out_dir_.empty() && cfg_.checkpoint_every > 0 &&
        s.step % cfg_.checkpoint_every == 0 && s.step != total_steps_) {
      std::string name = "ckpt-" + std::to_string(s.step) + ".him";
      save((dir / name).string());
      checkpoints_.push_back(name);
    }
  }
  if (!out_dir_.empty()) {
    save((dir / "final.him").string());
    checkpoints_.push_back("final.him");
    write_manifest();
  }
}

void Trainer::log_line(const StepStats& s) {
  history_.push_back(s);
  if (out_dir_.empty()) return;
  nlohmann::ordered_json j;
  j["step"] = s.step;
  j["lr"] = s.lr;
  j["L_cls"] = s.l_cls;
  j["L_seg"] = s.l_seg;
  j["L_tri"] = s.l_tri;
  j["L_alpha"] = s.l_alpha;
  j["L_total"] = s.l_total;
  j["grad_norm"] = s.grad_norm;
  std::ofstream out(out_dir_ + "/train_log.jsonl", std::ios::app);
  if (!out) throw IoError("cannot append to " + out_dir_ + "/train_log.jsonl");
  out << j.dump() << "\n";
}

void Trainer::write_manifest() const {
  nlohmann::ordered_json j;
  j["config"] = "config.json";
  j["log"] = "train_log.jsonl";
  j["checkpoints"] = checkpoints_;
  j["steps"] = step_;
  std::ofstream out(out_dir_ + "/manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + out_dir_ + "/manifest.json");
  out << j.dump(2) << "\n";
}

void Trainer::abort_non_finite(const StepStats& s, int64_t sample_index) {
  if (!out_dir_.empty()) {
    nlohmann::ordered_json j;
    j["step"] = step_ + 1;
    j["sample_index"] = sample_index;
    j["L_cls"] = s.l_cls;
    j["L_seg"] = s.l_seg;
    j["L_tri"] = s.l_tri;
    j["L_alpha"] = s.l_alpha;
    j["L_total"] = s.l_total;
    j["grad_norm"] = s.grad_norm;
    nlohmann::ordered_json pn = nlohmann::ordered_json::object();
    for (const auto& [name, var] : model_.params().items()) {
      const Tensor& t = var.val();
      double sq = 0.0;
      for (int64_t i = 0; i < t.numel(); ++i) sq += t[i] * t[i];
      pn[name] = std::sqrt(sq);
    }
    j["param_norms"] = std::move(pn);
    std::ofstream out(out_dir_ + "/nan_dump.json", std::ios::trunc);
    if (out) out << j.dump(2) << "\n";
  }
  throw std::runtime_error("non-finite loss at step " +
                           std::to_string(step_ + 1) +
                           (out_dir_.empty()
                                ? std::string()
                                : ", diagnostics in " + out_dir_ + "/nan_dump.json"));
}

void Trainer::save(const std::string& path) const {
  save_checkpoint(path, cfg_, model_.params(), &opt_, step_);
}

void Trainer::resume(const std::string& path) {
  CheckpointInfo info = peek_checkpoint(path);
  // Only the run length may change across a resume; the recipe, model, and
  // data definitions must match the checkpoint exactly.
  nlohmann::ordered_json theirs = run_config_to_json(info.config);
  nlohmann::ordered_json ours = run_config_to_json(cfg_);
  for (auto* j : {&theirs, &ours}) {
    (*j)["optim"].erase("steps");
    (*j)["optim"].erase("epochs");
  }
  if (theirs != ours)
    throw ConfigError("checkpoint config does not match the run config");
  info = load_checkpoint(path, model_.params(), &opt_);
  step_ = info.step;
}

}  // namespace him
