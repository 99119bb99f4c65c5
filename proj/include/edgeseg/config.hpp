#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace edgeseg {

/// Geometry of one encoder stage.
struct StageConfig {
  std::size_t channels = 32;
  std::size_t depth = 2;
  std::size_t heads = 1;
  std::size_t reduction = 1;  // spatial reduction ratio for keys/values
  std::size_t patch_kernel = 3;
  std::size_t patch_stride = 2;
  std::size_t patch_pad = 1;

  std::size_t head_dim() const { return channels / heads; }
};

struct ModelConfig {
  std::array<std::size_t, 4> detector_channels{16, 32, 64, 128};
  std::array<StageConfig, 4> stages{
      StageConfig{32, 2, 1, 4, 7, 4, 3},
      StageConfig{64, 2, 2, 2, 3, 2, 1},
      StageConfig{160, 2, 5, 1, 3, 2, 1},
      StageConfig{256, 2, 8, 1, 3, 2, 1},
  };
  std::size_t mlp_ratio = 4;
  double canny_low = 100.0;
  double canny_high = 200.0;
  double softargmax_temperature = 1.0;
  bool edge_filtering = true;  // EF
  bool edge_guidance = true;   // EG
  std::size_t fusion_stage = 1;  // encoder stage (1-4) that receives edge guidance

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  /// Tiny configuration used by the full-model gradient check.
  static ModelConfig tiny();
};

struct TrainConfig {
  double learning_rate = 6e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 2;
  std::size_t max_steps = 2000;
  std::uint64_t seed = 0;
  double lambda = 1.0;
  bool random_crop = true;
  bool horizontal_flip = true;
  std::size_t crop_size = 64;
  double grad_clip = 0.0;  // global-norm clip, 0 disables
  std::size_t checkpoint_every = 0;

  void validate() const;
};

struct SynthConfig {
  int height = 64;
  int width = 64;
  int min_glyphs = 3;
  int max_glyphs = 8;
  int min_stroke = 1;
  int max_stroke = 3;
  bool gradient_background = true;
  bool noise_background = true;
  bool shape_background = true;
  int max_shapes = 3;
  int noise_amplitude = 12;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EvalConfig {
  int band_radius = 2;
};

/// Everything a CLI run can configure; every field has a default.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;
  EvalConfig eval;
};

nlohmann::json to_json(const ModelConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const SynthConfig& cfg);
nlohmann::json to_json(const RunConfig& cfg);

/// Strict parsers: unknown keys raise ConfigError listing the valid keys.
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
SynthConfig synth_config_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Applies "section.key=value" (value parsed as JSON, else taken as a string).
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace edgeseg
