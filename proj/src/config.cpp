#include "edgeseg/config.hpp"

#include <algorithm>
#include <sstream>

#include "edgeseg/errors.hpp"

namespace edgeseg {

using nlohmann::json;

namespace {

/// Rejects keys of `j` that are absent from `defaults`.
void check_keys(const json& j, const json& defaults, const std::string& section) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& item : j.items()) {
    if (!defaults.contains(item.key())) {
      std::ostringstream os;
      os << "unknown key '" << item.key() << "' in " << (section.empty() ? "config" : "section '" + section + "'")
         << "; valid keys:";
      for (const auto& d : defaults.items()) os << ' ' << d.key();
      throw ConfigError(os.str());
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for " + section + "." + key + ": " + e.what());
  }
}

json stage_json(const StageConfig& s) {
  return {{"channels", s.channels},       {"depth", s.depth},
          {"heads", s.heads},             {"reduction", s.reduction},
          {"patch_kernel", s.patch_kernel}, {"patch_stride", s.patch_stride},
          {"patch_pad", s.patch_pad}};
}

StageConfig stage_from_json(const json& j, StageConfig s, const std::string& section) {
  check_keys(j, stage_json(s), section);
  read(j, "channels", s.channels, section);
  read(j, "depth", s.depth, section);
  read(j, "heads", s.heads, section);
  read(j, "reduction", s.reduction, section);
  read(j, "patch_kernel", s.patch_kernel, section);
  read(j, "patch_stride", s.patch_stride, section);
  read(j, "patch_pad", s.patch_pad, section);
  return s;
}

}  // namespace

void ModelConfig::validate() const {
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& s = stages[i];
    const std::string name = "model.stages[" + std::to_string(i) + "]";
    if (s.channels == 0 || s.heads == 0 || s.channels % s.heads != 0) {
      throw ConfigError(name + ": channels must be a positive multiple of heads");
    }
    if (s.depth == 0) throw ConfigError(name + ": depth must be at least 1");
    if (s.reduction == 0) throw ConfigError(name + ": reduction ratio must be at least 1");
    if (s.patch_kernel == 0 || s.patch_stride == 0) throw ConfigError(name + ": patch kernel/stride must be positive");
    if (detector_channels[i] == 0) throw ConfigError("model.detector_channels must be positive");
  }
  if (mlp_ratio == 0) throw ConfigError("model.mlp_ratio must be positive");
  if (canny_low < 0.0 || canny_low > canny_high) throw ConfigError("model: need 0 <= canny_low <= canny_high");
  if (!(softargmax_temperature > 0.0)) throw ConfigError("model.softargmax_temperature must be > 0");
  if (fusion_stage < 1 || fusion_stage > 4) throw ConfigError("model.fusion_stage must be in 1..4");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig cfg;
  cfg.detector_channels = {4, 8, 8, 8};
  cfg.stages = {
      StageConfig{8, 1, 1, 4, 7, 4, 3},
      StageConfig{16, 1, 2, 2, 3, 2, 1},
      StageConfig{32, 1, 2, 1, 3, 2, 1},
      StageConfig{64, 1, 4, 1, 3, 2, 1},
  };
  cfg.mlp_ratio = 2;
  return cfg;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("train.learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
  if (!(lambda >= 0.0)) throw ConfigError("train.lambda must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("train.beta1/beta2 must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("train.epsilon must be > 0");
  if (crop_size == 0 || crop_size % 32 != 0) throw ConfigError("train.crop_size must be a positive multiple of 32");
  if (grad_clip < 0.0) throw ConfigError("train.grad_clip must be >= 0");
}

void SynthConfig::validate() const {
  if (height < 8 || width < 8) throw ConfigError("synth canvas must be at least 8x8");
  if (min_glyphs < 0 || max_glyphs < min_glyphs) throw ConfigError("synth: need 0 <= min_glyphs <= max_glyphs");
  if (min_stroke < 1 || max_stroke < min_stroke) throw ConfigError("synth: need 1 <= min_stroke <= max_stroke");
  if (max_shapes < 0) throw ConfigError("synth.max_shapes must be >= 0");
  if (noise_amplitude < 0 || noise_amplitude > 127) throw ConfigError("synth.noise_amplitude must be in 0..127");
}

json to_json(const ModelConfig& cfg) {
  json stages = json::array();
  for (const auto& s : cfg.stages) stages.push_back(stage_json(s));
  return {{"detector_channels", cfg.detector_channels},
          {"stages", stages},
          {"mlp_ratio", cfg.mlp_ratio},
          {"canny_low", cfg.canny_low},
          {"canny_high", cfg.canny_high},
          {"softargmax_temperature", cfg.softargmax_temperature},
          {"edge_filtering", cfg.edge_filtering},
          {"edge_guidance", cfg.edge_guidance},
          {"fusion_stage", cfg.fusion_stage}};
}

json to_json(const TrainConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate}, {"weight_decay", cfg.weight_decay},
          {"beta1", cfg.beta1},                 {"beta2", cfg.beta2},
          {"epsilon", cfg.epsilon},             {"batch_size", cfg.batch_size},
          {"max_steps", cfg.max_steps},         {"seed", cfg.seed},
          {"lambda", cfg.lambda},               {"random_crop", cfg.random_crop},
          {"horizontal_flip", cfg.horizontal_flip}, {"crop_size", cfg.crop_size},
          {"grad_clip", cfg.grad_clip},         {"checkpoint_every", cfg.checkpoint_every}};
}

json to_json(const SynthConfig& cfg) {
  return {{"height", cfg.height},
          {"width", cfg.width},
          {"min_glyphs", cfg.min_glyphs},
          {"max_glyphs", cfg.max_glyphs},
          {"min_stroke", cfg.min_stroke},
          {"max_stroke", cfg.max_stroke},
          {"gradient_background", cfg.gradient_background},
          {"noise_background", cfg.noise_background},
          {"shape_background", cfg.shape_background},
          {"max_shapes", cfg.max_shapes},
          {"noise_amplitude", cfg.noise_amplitude},
          {"seed", cfg.seed}};
}

json to_json(const RunConfig& cfg) {
  return {{"model", to_json(cfg.model)},
          {"train", to_json(cfg.train)},
          {"synth", to_json(cfg.synth)},
          {"eval", {{"band_radius", cfg.eval.band_radius}}}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  check_keys(j, to_json(cfg), "model");
  read(j, "detector_channels", cfg.detector_channels, "model");
  if (j.contains("stages")) {
    const json& st = j.at("stages");
    if (!st.is_array() || st.size() != 4) throw ConfigError("model.stages must be an array of 4 stage objects");
    for (std::size_t i = 0; i < 4; ++i) {
      cfg.stages[i] = stage_from_json(st[i], cfg.stages[i], "model.stages[" + std::to_string(i) + "]");
    }
  }
  read(j, "mlp_ratio", cfg.mlp_ratio, "model");
  read(j, "canny_low", cfg.canny_low, "model");
  read(j, "canny_high", cfg.canny_high, "model");
  read(j, "softargmax_temperature", cfg.softargmax_temperature, "model");
  read(j, "edge_filtering", cfg.edge_filtering, "model");
  read(j, "edge_guidance", cfg.edge_guidance, "model");
  read(j, "fusion_stage", cfg.fusion_stage, "model");
  cfg.validate();
  return cfg;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  check_keys(j, to_json(cfg), "train");
  read(j, "learning_rate", cfg.learning_rate, "train");
  read(j, "weight_decay", cfg.weight_decay, "train");
  read(j, "beta1", cfg.beta1, "train");
  read(j, "beta2", cfg.beta2, "train");
  read(j, "epsilon", cfg.epsilon, "train");
  read(j, "batch_size", cfg.batch_size, "train");
  read(j, "max_steps", cfg.max_steps, "train");
  read(j, "seed", cfg.seed, "train");
  read(j, "lambda", cfg.lambda, "train");
  read(j, "random_crop", cfg.random_crop, "train");
  read(j, "horizontal_flip", cfg.horizontal_flip, "train");
  read(j, "crop_size", cfg.crop_size, "train");
  read(j, "grad_clip", cfg.grad_clip, "train");
  read(j, "checkpoint_every", cfg.checkpoint_every, "train");
  cfg.validate();
  return cfg;
}

SynthConfig synth_config_from_json(const json& j) {
  SynthConfig cfg;
  check_keys(j, to_json(cfg), "synth");
  read(j, "height", cfg.height, "synth");
  read(j, "width", cfg.width, "synth");
  read(j, "min_glyphs", cfg.min_glyphs, "synth");
  read(j, "max_glyphs", cfg.max_glyphs, "synth");
  read(j, "min_stroke", cfg.min_stroke, "synth");
  read(j, "max_stroke", cfg.max_stroke, "synth");
  read(j, "gradient_background", cfg.gradient_background, "synth");
  read(j, "noise_background", cfg.noise_background, "synth");
  read(j, "shape_background", cfg.shape_background, "synth");
  read(j, "max_shapes", cfg.max_shapes, "synth");
  read(j, "noise_amplitude", cfg.noise_amplitude, "synth");
  read(j, "seed", cfg.seed, "synth");
  cfg.validate();
  return cfg;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  if (j.is_null()) return cfg;
  check_keys(j, to_json(cfg), "");
  if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
  if (j.contains("synth")) cfg.synth = synth_config_from_json(j.at("synth"));
  if (j.contains("eval")) {
    check_keys(j.at("eval"), json{{"band_radius", 0}}, "eval");
    read(j.at("eval"), "band_radius", cfg.eval.band_radius, "eval");
    if (cfg.eval.band_radius < 1) throw ConfigError("eval.band_radius must be >= 1");
  }
  return cfg;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override path '" + path + "' has an empty component");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace edgeseg
