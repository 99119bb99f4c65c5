#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edgeseg/config.hpp"
#include "edgeseg/metrics.hpp"
#include "edgeseg/model.hpp"
#include "edgeseg/serialize.hpp"
#include "edgeseg/synth.hpp"

namespace edgeseg {

using Model = EdgeSegModel<float>;

/// AdamW with decoupled weight decay: p <- p * (1 - lr * wd), then the
/// bias-corrected Adam step.
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, Tensorf>> params, const TrainConfig& cfg);

  void step();
  void zero_grad();
  /// Rescales all gradients so their global L2 norm is at most `max_norm`.
  /// Returns the norm before clipping.
  double clip_grad_norm(double max_norm);

  std::uint64_t steps() const { return step_; }
  /// Moments as "optim/<param>.m" and "optim/<param>.v".
  void export_state(NamedTensors<float>& out) const;
  void import_state(const NamedTensors<float>& in, std::uint64_t step);

 private:
  std::vector<std::pair<std::string, Tensorf>> params_;
  std::vector<std::vector<float>> m_, v_;
  double lr_, wd_, beta1_, beta2_, eps_;
  std::uint64_t step_ = 0;
};

struct StepLog {
  std::size_t step = 0;  // 1-based
  double seg = 0.0;
  double det = 0.0;
  double total = 0.0;
};

/// Training sample after augmentation, with Canny recomputed on the result.
struct TrainItem {
  ImageU8 image;
  MaskPair masks;
  EdgeMap edges;
};

class Trainer {
 public:
  Trainer(const RunConfig& cfg, std::vector<Sample> data);

  /// Restores model, optimizer and step counter from a checkpoint.
  static Trainer resume(const std::filesystem::path& checkpoint, std::vector<Sample> data);

  StepLog step();
  /// Runs until `max_steps`; each step's log line goes to `log` if given.
  /// Periodic checkpoints go to `checkpoint_dir` when checkpoint_every > 0.
  std::vector<StepLog> run(std::ostream* log = nullptr, const std::filesystem::path& checkpoint_dir = {});

  void save_checkpoint(const std::filesystem::path& path) const;

  /// Index of the dataset item used at flat position `position` (step * batch + b).
  std::size_t item_index(std::uint64_t position);
  TrainItem make_item(std::uint64_t position);

  Model& model() { return model_; }
  const RunConfig& config() const { return cfg_; }
  std::size_t steps_done() const { return steps_done_; }

 private:
  RunConfig cfg_;
  std::vector<Sample> data_;
  Model model_;
  AdamW optim_;
  std::size_t steps_done_ = 0;
  std::uint64_t perm_epoch_ = ~std::uint64_t{0};
  std::vector<std::size_t> perm_;
};

std::string format_step(const StepLog& s);

/// Checkpoint = model parameters plus optimizer state; metadata carries the
/// full run config and the step counter.
void save_model_checkpoint(const std::filesystem::path& path, Model& model, const RunConfig& cfg,
                           std::size_t step, const AdamW* optim);
struct LoadedModel {
  RunConfig config;
  std::size_t step = 0;
  Model model;
};
LoadedModel load_model_checkpoint(const std::filesystem::path& path);

MetricReport evaluate(const Model& model, const std::vector<Sample>& data, int band_radius);

/// Trains a model from `cfg` on `train` and scores it on `test`.
struct RunOutcome {
  MetricReport report;
  std::vector<StepLog> log;
};
RunOutcome train_and_evaluate(const RunConfig& cfg, const std::vector<Sample>& train,
                              const std::vector<Sample>& test);

using ProgressFn = std::function<void(const std::string&)>;

struct SweepRow {
  double lambda = 0.0;
  MetricReport report;
};
std::vector<double> default_lambdas();
std::vector<SweepRow> lambda_sweep(const RunConfig& base, const std::vector<Sample>& train,
                                   const std::vector<Sample>& test, const std::vector<double>& lambdas,
                                   const ProgressFn& progress = {});
std::string format_sweep(const std::vector<SweepRow>& rows);
nlohmann::json sweep_json(const std::vector<SweepRow>& rows);

struct AblationRow {
  bool edge_filtering = false;
  bool edge_guidance = false;
  std::vector<MetricReport> per_seed;
  double mean_fg_iou = 0.0;
  double mean_f_score = 0.0;
  double mean_edge_fg_iou = 0.0;
};
struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;  // (.,.), EF, EG, EF+EG
  /// Ordering checks per seed and on the means; empty when all hold.
  std::vector<std::string> violations;
};
AblationTable ablation_run(const RunConfig& base, const std::vector<Sample>& train,
                           const std::vector<Sample>& test, const std::vector<std::uint64_t>& seeds,
                           const ProgressFn& progress = {});
std::string format_ablation(const AblationTable& table);
nlohmann::json ablation_json(const AblationTable& table);

}  // namespace edgeseg
