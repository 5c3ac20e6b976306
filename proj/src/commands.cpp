#include "him/commands.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "him/checkpoint.hpp"
#include "him/dataset.hpp"
#include "him/evaluator.hpp"
#include "him/image_io.hpp"
#include "him/trainer.hpp"

namespace him {

namespace {

namespace fs = std::filesystem;

// Shared --preset/--config/--set options. A config file replaces the preset;
// overrides apply on top of either.
struct ConfigArgs {
  std::string preset = "toy";
  std::string config_path;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    auto* p = cmd->add_option("--preset", preset, "built-in preset (toy|full)")
                  ->capture_default_str();
    cmd->add_option("--config", config_path, "run config JSON file")
        ->excludes(p);
    cmd->add_option("--set", sets,
                    "dotted override, e.g. --set optim.lr=0.001 (repeatable)");
  }

  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? run_config_preset(preset)
                                        : load_run_config(config_path);
    return apply_overrides(cfg, sets);
  }
};

bool deterministic_mode() {
  const char* v = std::getenv("HIM_DETERMINISTIC");
  return !(v && std::string(v) == "0");
}

std::vector<Scene> load_dataset(const std::string& data_dir) {
  std::vector<Scene> scenes;
  for (const std::string& dir : list_scenes(data_dir))
    scenes.push_back(load_scene(dir));
  if (scenes.empty()) throw IoError("no scenes found under " + data_dir);
  return scenes;
}

// Rebuilds a model from the checkpoint's embedded config and loads weights.
E2EHim load_model(const std::string& ckpt_path, RunConfig* cfg_out) {
  CheckpointInfo info = peek_checkpoint(ckpt_path);
  E2EHim model(info.config.model, info.config.seed);
  load_checkpoint(ckpt_path, model.params(), nullptr);
  if (cfg_out) *cfg_out = info.config;
  return model;
}

int reflect_index(int i, int n) {
  if (n <= 1) return 0;
  int period = 2 * (n - 1);
  int k = i % period;
  if (k < 0) k += period;
  return k < n ? k : period - k;
}

// Pads bottom/right by mirror reflection so both sides divide `multiple`.
Tensor reflect_pad_to_multiple(const Tensor& image, int multiple) {
  int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  int ph = (h + multiple - 1) / multiple * multiple;
  int pw = (w + multiple - 1) / multiple * multiple;
  if (ph == h && pw == w) return image;
  Tensor out = Tensor::zeros({c, ph, pw});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < ph; ++y) {
      int sy = reflect_index(y, h);
      for (int x = 0; x < pw; ++x)
        out[(static_cast<int64_t>(ch) * ph + y) * pw + x] =
            image[(static_cast<int64_t>(ch) * h + sy) * w + reflect_index(x, w)];
    }
  return out;
}

Tensor crop2d(const Tensor& t, int h, int w) {
  int th = t.dim(0), tw = t.dim(1);
  if (th == h && tw == w) return t;
  Tensor out = Tensor::zeros({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[static_cast<int64_t>(y) * w + x] = t[static_cast<int64_t>(y) * tw + x];
  return out;
}

// Shared by infer and composite-demo: pad, run, crop the kept alphas back.
std::vector<SelectedInstance> infer_padded(const E2EHim& model,
                                           const Tensor& image,
                                           double threshold) {
  int h = image.dim(1), w = image.dim(2);
  Tensor padded = reflect_pad_to_multiple(image, 16);
  std::vector<SelectedInstance> kept = model.infer(padded, threshold);
  for (SelectedInstance& inst : kept) inst.alpha = crop2d(inst.alpha, h, w);
  return kept;
}

Tensor union_alpha(const std::vector<SelectedInstance>& kept, int h, int w) {
  Tensor u = Tensor::zeros({h, w});
  for (const SelectedInstance& inst : kept)
    for (int64_t i = 0; i < u.numel(); ++i) {
      double v = u[i] + inst.alpha[i];
      u[i] = v > 1.0 ? 1.0 : v;
    }
  return u;
}

int cmd_gen_data(const ConfigArgs& cargs, const std::string& out_dir,
                 int count) {
  RunConfig cfg = cargs.resolve();
  write_dataset(out_dir, cfg.data, count, cfg.seed);
  // Round-trip check: every stored scene must recomposite within quantization.
  std::vector<std::string> dirs = list_scenes(out_dir);
  for (const std::string& dir : dirs) load_scene(dir);
  std::cout << "wrote " << dirs.size() << " scenes to " << out_dir << "\n";
  return 0;
}

int cmd_train(const ConfigArgs& cargs, const std::string& data_dir,
              const std::string& out_dir, const std::string& resume_path) {
  RunConfig cfg = cargs.resolve();
  if (!deterministic_mode()) {
    cfg.seed = std::random_device{}();
    std::cout << "non-deterministic mode, seed " << cfg.seed << "\n";
  }
  Trainer trainer(cfg, load_dataset(data_dir), out_dir);
  if (!resume_path.empty()) trainer.resume(resume_path);
  std::cout << "training " << trainer.total_steps() << " steps (from "
            << trainer.step() << ")\n";
  trainer.run();
  if (trainer.history().empty()) {
    std::cout << "nothing to do: checkpoint already at step " << trainer.step()
              << "\n";
  } else {
    const StepStats& last = trainer.history().back();
    std::cout << "done: step " << last.step << " L_total " << last.l_total
              << ", artifacts in " << out_dir << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& out_path, double threshold, bool oracle,
             const std::vector<double>& ths) {
  EvalOptions opts;
  opts.threshold = threshold;
  opts.oracle = oracle;
  if (!ths.empty()) opts.iou_thresholds = ths;

  MetricsReport report;
  if (oracle) {
    report = evaluate_dir(nullptr, data_dir, opts);
  } else {
    if (ckpt_path.empty())
      throw ConfigError("eval needs --checkpoint (or --oracle)");
    E2EHim model = load_model(ckpt_path, nullptr);
    report = evaluate_dir(&model, data_dir, opts);
  }
  std::string text = report.to_json().dump(2);
  if (out_path.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + out_path);
    out << text << "\n";
    std::cout << "report written to " << out_path << "\n";
  }
  return 0;
}

int cmd_infer(const std::string& ckpt_path, const std::string& image_path,
              const std::string& out_dir, double threshold) {
  E2EHim model = load_model(ckpt_path, nullptr);
  Tensor image = read_png_rgb(image_path);
  std::vector<SelectedInstance> kept = infer_padded(model, image, threshold);

  fs::create_directories(out_dir);
  nlohmann::ordered_json manifest;
  manifest["image"] = image_path;
  manifest["height"] = image.dim(1);
  manifest["width"] = image.dim(2);
  manifest["threshold"] = threshold;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (size_t k = 0; k < kept.size(); ++k) {
    std::string name = "alpha_" + std::to_string(k) + ".png";
    write_png_gray((fs::path(out_dir) / name).string(), kept[k].alpha);
    nlohmann::ordered_json rec;
    rec["file"] = name;
    rec["query"] = kept[k].query;
    rec["confidence"] = kept[k].confidence;
    list.push_back(std::move(rec));
  }
  manifest["instances"] = std::move(list);
  std::ofstream mf((fs::path(out_dir) / "manifest.json").string(),
                   std::ios::trunc);
  if (!mf) throw IoError("cannot write manifest under " + out_dir);
  mf << manifest.dump(2) << "\n";
  std::cout << kept.size() << " instance(s), outputs in " << out_dir << "\n";
  return 0;
}

int cmd_composite_demo(const std::string& ckpt_path,
                       const std::string& image_path,
                       const std::string& background_path,
                       const std::string& out_dir, double threshold) {
  E2EHim model = load_model(ckpt_path, nullptr);
  Tensor image = read_png_rgb(image_path);
  int h = image.dim(1), w = image.dim(2);

  Tensor bg;
  if (background_path.empty()) {
    bg = Tensor::full({3, h, w}, 0.5);
  } else {
    bg = read_png_rgb(background_path);
    if (bg.dim(1) != h || bg.dim(2) != w)
      throw ConfigError("background size must match the input image");
  }

  std::vector<SelectedInstance> kept = infer_padded(model, image, threshold);
  Tensor u = union_alpha(kept, h, w);
  Tensor out = Tensor::zeros({3, h, w});
  int64_t plane = static_cast<int64_t>(h) * w;
  for (int c = 0; c < 3; ++c)
    for (int64_t i = 0; i < plane; ++i)
      out[c * plane + i] =
          u[i] * image[c * plane + i] + (1.0 - u[i]) * bg[c * plane + i];

  fs::create_directories(out_dir);
  write_png_rgb((fs::path(out_dir) / "composite.png").string(), out);
  write_png_gray((fs::path(out_dir) / "alpha_union.png").string(), u);
  std::cout << "composited " << kept.size() << " instance(s) into " << out_dir
            << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"end-to-end human instance matting"};
  app.require_subcommand(1);

  ConfigArgs gen_cfg, train_cfg;
  std::string gen_out;
  int gen_count = 64;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen_cfg.attach(gen);
  gen->add_option("--out", gen_out, "dataset directory")->required();
  gen->add_option("--count", gen_count, "number of scenes")
      ->capture_default_str();

  std::string train_data, train_out, train_resume;
  auto* train = app.add_subcommand("train", "train a model");
  train_cfg.attach(train);
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--out", train_out, "run directory")->required();
  train->add_option("--resume", train_resume, "checkpoint to resume from");

  std::string eval_ckpt, eval_data, eval_out;
  double eval_th = 0.5;
  bool eval_oracle = false;
  std::vector<double> eval_ious;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file");
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--out", eval_out, "write the JSON report here");
  eval->add_option("--threshold", eval_th, "confidence cutoff")
      ->capture_default_str();
  eval->add_flag("--oracle", eval_oracle,
                 "evaluate ground truth piped through as predictions");
  eval->add_option("--iou-th", eval_ious, "IoU thresholds for ACC/REC");

  std::string inf_ckpt, inf_image, inf_out;
  double inf_th = 0.5;
  auto* infer = app.add_subcommand("infer", "predict instance mattes");
  infer->add_option("--checkpoint", inf_ckpt, "checkpoint file")->required();
  infer->add_option("--image", inf_image, "input PNG")->required();
  infer->add_option("--out", inf_out, "output directory")->required();
  infer->add_option("--threshold", inf_th, "confidence cutoff")
      ->capture_default_str();

  std::string demo_ckpt, demo_image, demo_bg, demo_out;
  double demo_th = 0.5;
  auto* demo =
      app.add_subcommand("composite-demo", "re-composite onto a new background");
  demo->add_option("--checkpoint", demo_ckpt, "checkpoint file")->required();
  demo->add_option("--image", demo_image, "input PNG")->required();
  demo->add_option("--background", demo_bg, "background PNG (default gray)");
  demo->add_option("--out", demo_out, "output directory")->required();
  demo->add_option("--threshold", demo_th, "confidence cutoff")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 3;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_cfg, gen_out, gen_count);
    if (train->parsed())
      return cmd_train(train_cfg, train_data, train_out, train_resume);
    if (eval->parsed())
      return cmd_eval(eval_ckpt, eval_data, eval_out, eval_th, eval_oracle,
                      eval_ious);
    if (infer->parsed()) return cmd_infer(inf_ckpt, inf_image, inf_out, inf_th);
    if (demo->parsed())
      return cmd_composite_demo(demo_ckpt, demo_image, demo_bg, demo_out,
                                demo_th);
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace him
