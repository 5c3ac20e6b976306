#include "him/config.hpp"

#include <cmath>
#include <fstream>

#include "him/dataset.hpp"

namespace him {

namespace {

using json = nlohmann::ordered_json;

template <typename T>
void pull(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json network_to_json(const NetworkConfig& c) {
  json j;
  j["channels"] = c.channels;
  j["queries"] = c.queries;
  j["encoder_layers"] = c.encoder_layers;
  j["decoder_layers"] = c.decoder_layers;
  j["heads"] = c.heads;
  j["backbone"] = c.backbone;
  j["group_norm_groups"] = c.group_norm_groups;
  j["stem_channels"] = c.stem_channels;
  j["guidance_heads"] = c.guidance_heads;
  j["matting_channels"] = c.matting_channels;
  j["alpha_channels"] = c.alpha_channels;
  j["trimap_channels"] = c.trimap_channels;
  j["ffn_mult"] = c.ffn_mult;
  return j;
}

NetworkConfig network_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  pull(j, "channels", c.channels);
  pull(j, "queries", c.queries);
  pull(j, "encoder_layers", c.encoder_layers);
  pull(j, "decoder_layers", c.decoder_layers);
  pull(j, "heads", c.heads);
  pull(j, "backbone", c.backbone);
  pull(j, "group_norm_groups", c.group_norm_groups);
  pull(j, "stem_channels", c.stem_channels);
  pull(j, "guidance_heads", c.guidance_heads);
  pull(j, "matting_channels", c.matting_channels);
  pull(j, "alpha_channels", c.alpha_channels);
  pull(j, "trimap_channels", c.trimap_channels);
  pull(j, "ffn_mult", c.ffn_mult);
  return c;
}

json loss_to_json(const LossWeights& w) {
  json j;
  j["lambda_c"] = w.lambda_c;
  j["lambda_s"] = w.lambda_s;
  j["lambda_b"] = w.lambda_b;
  j["lambda_d"] = w.lambda_d;
  j["lambda_t"] = w.lambda_t;
  j["lambda_alpha"] = w.lambda_alpha;
  j["lambda_pu"] = w.lambda_pu;
  j["lambda_gu"] = w.lambda_gu;
  j["lambda_p"] = w.lambda_p;
  j["lambda_m"] = w.lambda_m;
  j["w_background"] = w.w_background;
  j["w_human"] = w.w_human;
  j["focal_gamma"] = w.focal_gamma;
  return j;
}

LossWeights loss_from_json(const nlohmann::json& j) {
  LossWeights w;
  pull(j, "lambda_c", w.lambda_c);
  pull(j, "lambda_s", w.lambda_s);
  pull(j, "lambda_b", w.lambda_b);
  pull(j, "lambda_d", w.lambda_d);
  pull(j, "lambda_t", w.lambda_t);
  pull(j, "lambda_alpha", w.lambda_alpha);
  pull(j, "lambda_pu", w.lambda_pu);
  pull(j, "lambda_gu", w.lambda_gu);
  pull(j, "lambda_p", w.lambda_p);
  pull(j, "lambda_m", w.lambda_m);
  pull(j, "w_background", w.w_background);
  pull(j, "w_human", w.w_human);
  pull(j, "focal_gamma", w.focal_gamma);
  return w;
}

json augment_to_json(const AugmentConfig& a) {
  json j;
  j["crop_h"] = a.crop_h;
  j["crop_w"] = a.crop_w;
  j["p_flip"] = a.p_flip;
  j["p_affine"] = a.p_affine;
  j["max_rotate_deg"] = a.max_rotate_deg;
  j["max_scale_delta"] = a.max_scale_delta;
  j["max_translate_frac"] = a.max_translate_frac;
  j["p_color"] = a.p_color;
  j["contrast_jitter"] = a.contrast_jitter;
  j["gamma_jitter"] = a.gamma_jitter;
  j["saturation_jitter"] = a.saturation_jitter;
  j["p_paste"] = a.p_paste;
  j["max_instances"] = a.max_instances;
  j["alpha_lo"] = a.alpha_lo;
  j["alpha_hi"] = a.alpha_hi;
  j["trimap_dilate"] = a.trimap_dilate;
  return j;
}

AugmentConfig augment_from_json(const nlohmann::json& j) {
  AugmentConfig a;
  pull(j, "crop_h", a.crop_h);
  pull(j, "crop_w", a.crop_w);
  pull(j, "p_flip", a.p_flip);
  pull(j, "p_affine", a.p_affine);
  pull(j, "max_rotate_deg", a.max_rotate_deg);
  pull(j, "max_scale_delta", a.max_scale_delta);
  pull(j, "max_translate_frac", a.max_translate_frac);
  pull(j, "p_color", a.p_color);
  pull(j, "contrast_jitter", a.contrast_jitter);
  pull(j, "gamma_jitter", a.gamma_jitter);
  pull(j, "saturation_jitter", a.saturation_jitter);
  pull(j, "p_paste", a.p_paste);
  pull(j, "max_instances", a.max_instances);
  pull(j, "alpha_lo", a.alpha_lo);
  pull(j, "alpha_hi", a.alpha_hi);
  pull(j, "trimap_dilate", a.trimap_dilate);
  return a;
}

json optim_to_json(const OptimConfig& o) {
  json j;
  j["algorithm"] = o.algorithm;
  j["lr"] = o.lr;
  j["beta1"] = o.beta1;
  j["beta2"] = o.beta2;
  j["eps"] = o.eps;
  j["weight_decay"] = o.weight_decay;
  j["schedule"] = o.schedule;
  j["epochs"] = o.epochs;
  j["batch_size"] = o.batch_size;
  j["steps"] = o.steps;
  j["grad_clip"] = o.grad_clip;
  j["warmup_steps"] = o.warmup_steps;
  return j;
}

OptimConfig optim_from_json(const nlohmann::json& j) {
  OptimConfig o;
  pull(j, "algorithm", o.algorithm);
  pull(j, "lr", o.lr);
  pull(j, "beta1", o.beta1);
  pull(j, "beta2", o.beta2);
  pull(j, "eps", o.eps);
  pull(j, "weight_decay", o.weight_decay);
  pull(j, "schedule", o.schedule);
  pull(j, "epochs", o.epochs);
  pull(j, "batch_size", o.batch_size);
  pull(j, "steps", o.steps);
  pull(j, "grad_clip", o.grad_clip);
  pull(j, "warmup_steps", o.warmup_steps);
  return o;
}

}  // namespace

void OptimConfig::validate() const {
  if (algorithm != "adamw") throw ConfigError("unknown optimizer: " + algorithm);
  if (schedule != "cosine" && schedule != "constant")
    throw ConfigError("unknown schedule: " + schedule);
  if (!(lr > 0.0) || !std::isfinite(lr))
    throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("betas must lie in [0,1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (weight_decay < 0.0 || !std::isfinite(weight_decay))
    throw ConfigError("weight decay must be nonnegative");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (steps < 0) throw ConfigError("steps must be nonnegative");
  if (grad_clip <= 0.0) throw ConfigError("grad_clip must be positive");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be nonnegative");
}

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  data.validate();
  augment.validate(data.height, data.width);
  optim.validate();
  if (log_every < 1) throw ConfigError("log_every must be at least 1");
  if (checkpoint_every < 1)
    throw ConfigError("checkpoint_every must be at least 1");
  if (model.queries < augment.max_instances)
    throw ConfigError("queries must cover the maximum instances per scene");
  if (augment.crop_h % 16 != 0 || augment.crop_w % 16 != 0)
    throw ConfigError("crop size must be divisible by 16");
}

nlohmann::ordered_json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["model"] = network_to_json(cfg.model);
  j["loss"] = loss_to_json(cfg.loss);
  j["data"] = scene_config_to_json(cfg.data);
  j["augment"] = augment_to_json(cfg.augment);
  j["optim"] = optim_to_json(cfg.optim);
  j["seed"] = cfg.seed;
  j["log_every"] = cfg.log_every;
  j["checkpoint_every"] = cfg.checkpoint_every;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  try {
    if (j.contains("model")) cfg.model = network_from_json(j.at("model"));
    if (j.contains("loss")) cfg.loss = loss_from_json(j.at("loss"));
    if (j.contains("data")) cfg.data = scene_config_from_json(j.at("data"));
    if (j.contains("augment"))
      cfg.augment = augment_from_json(j.at("augment"));
    if (j.contains("optim")) cfg.optim = optim_from_json(j.at("optim"));
    pull(j, "seed", cfg.seed);
    pull(j, "log_every", cfg.log_every);
    pull(j, "checkpoint_every", cfg.checkpoint_every);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad run config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig run_config_preset(const std::string& name) {
  RunConfig cfg;
  if (name == "toy") {
    cfg.model.channels = 64;
    cfg.model.queries = 8;
    cfg.model.guidance_heads = 2;
    cfg.model.encoder_layers = 2;
    cfg.model.decoder_layers = 6;
    cfg.data.height = 128;
    cfg.data.width = 128;
    cfg.data.min_instances = 1;
    cfg.data.max_instances = 4;
    cfg.augment.crop_h = 128;
    cfg.augment.crop_w = 128;
    cfg.augment.max_instances = 8;
    cfg.optim.lr = 2e-4;
    cfg.optim.batch_size = 4;
    cfg.optim.epochs = 20;
    return cfg;
  }
  if (name == "full") {
    cfg.model.channels = 256;
    cfg.model.queries = 20;
    cfg.model.guidance_heads = 2;
    cfg.model.encoder_layers = 2;
    cfg.model.decoder_layers = 6;
    cfg.data.height = 640;
    cfg.data.width = 640;
    cfg.data.min_instances = 1;
    cfg.data.max_instances = 8;
    cfg.augment.crop_h = 640;
    cfg.augment.crop_w = 640;
    cfg.augment.max_instances = 16;
    cfg.optim.lr = 8e-5;
    cfg.optim.beta1 = 0.9;
    cfg.optim.beta2 = 0.999;
    cfg.optim.weight_decay = 5e-4;
    cfg.optim.epochs = 40;
    cfg.optim.batch_size = 4;
    cfg.optim.schedule = "cosine";
    return cfg;
  }
  throw ConfigError("unknown preset: " + name);
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

RunConfig apply_overrides(const RunConfig& cfg,
                          const std::vector<std::string>& sets) {
  json j = run_config_to_json(cfg);
  for (const std::string& s : sets) {
    const size_t eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override must look like key.path=value: " + s);
    const std::string path = s.substr(0, eq);
    const std::string raw = s.substr(eq + 1);

    // walk the dotted path
    json* node = &j;
    size_t start = 0;
    while (true) {
      const size_t dot = path.find('.', start);
      const std::string key = path.substr(
          start, dot == std::string::npos ? std::string::npos : dot - start);
      if (key.empty()) throw ConfigError("bad override path: " + path);
      if (dot == std::string::npos) {
        if (!node->contains(key))
          throw ConfigError("unknown config key: " + path);
        json value;
        try {
          value = json::parse(raw);
        } catch (const nlohmann::json::exception&) {
          value = raw;  // unquoted strings
        }
        (*node)[key] = value;
        break;
      }
      if (!node->contains(key)) throw ConfigError("unknown config key: " + path);
      node = &(*node)[key];
      start = dot + 1;
    }
  }
  return run_config_from_json(j);
}

}  // namespace him
