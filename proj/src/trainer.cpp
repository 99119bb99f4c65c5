#include "edgeseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "edgeseg/canny.hpp"
#include "edgeseg/errors.hpp"
#include "edgeseg/rng.hpp"

namespace edgeseg {

AdamW::AdamW(std::vector<std::pair<std::string, Tensorf>> params, const TrainConfig& cfg)
    : params_(std::move(params)),
      lr_(cfg.learning_rate),
      wd_(cfg.weight_decay),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.epsilon) {
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p.size(), 0.0f);
    v_.emplace_back(p.size(), 0.0f);
  }
}

void AdamW::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

double AdamW::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (auto& [name, p] : params_) {
    if (!p.has_grad()) continue;
    for (float g : p.grad()) sq += double(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const float factor = static_cast<float>(max_norm / norm);
    for (auto& [name, p] : params_) {
      if (!p.has_grad()) continue;
      for (float& g : p.grad()) g *= factor;
    }
  }
  return norm;
}

void AdamW::step() {
  ++step_;
  const double t = static_cast<double>(step_);
  const float decay = static_cast<float>(1.0 - lr_ * wd_);
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(beta1_, t)));
  const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(beta2_, t)));
  const float lr = static_cast<float>(lr_), eps = static_cast<float>(eps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensorf& p = params_[i].second;
    auto data = p.data();
    const bool has_grad = p.has_grad();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const float g = has_grad ? p.grad()[j] : 0.0f;
      m_[i][j] = b1 * m_[i][j] + (1.0f - b1) * g;
      v_[i][j] = b2 * v_[i][j] + (1.0f - b2) * g * g;
      const float update = (m_[i][j] * c1) / (std::sqrt(v_[i][j] * c2) + eps);
      data[j] = data[j] * decay - lr * update;
    }
  }
}

void AdamW::export_state(NamedTensors<float>& out) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& [name, p] = params_[i];
    out.entries.emplace_back("optim/" + name + ".m", Tensorf(p.shape(), m_[i]));
    out.entries.emplace_back("optim/" + name + ".v", Tensorf(p.shape(), v_[i]));
  }
}

void AdamW::import_state(const NamedTensors<float>& in, std::uint64_t step) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& [name, p] = params_[i];
    const Tensorf* m = in.find("optim/" + name + ".m");
    const Tensorf* v = in.find("optim/" + name + ".v");
    if (!m || !v) throw IoError("checkpoint lacks optimizer state for " + name);
    if (m->shape() != p.shape() || v->shape() != p.shape()) throw IoError("optimizer state shape mismatch for " + name);
    m_[i].assign(m->data().begin(), m->data().end());
    v_[i].assign(v->data().begin(), v->data().end());
  }
  step_ = step;
}

std::string format_step(const StepLog& s) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu %.9g %.9g %.9g", s.step, s.seg, s.det, s.total);
  return buf;
}

namespace {

Model make_model(const RunConfig& cfg) {
  Model model(cfg.model);
  Rng rng(stream_seed(cfg.train.seed, "init"));
  model.init(rng);
  return model;
}

void check_finite(double value, const char* term, std::size_t step) {
  if (!std::isfinite(value)) {
    throw NumericError("non-finite " + std::string(term) + " loss at step " + std::to_string(step));
  }
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg, std::vector<Sample> data)
    : cfg_(cfg), data_(std::move(data)), model_(make_model(cfg)), optim_(model_.parameters(), cfg.train) {
  cfg_.model.validate();
  cfg_.train.validate();
  if (data_.empty()) throw ConfigError("training needs at least one sample");
  for (const auto& s : data_) {
    s.masks.validate();
    if (s.image.height < static_cast<int>(cfg_.train.crop_size) || s.image.width < static_cast<int>(cfg_.train.crop_size)) {
      throw ConfigError("training images (" + std::to_string(s.image.height) + "x" + std::to_string(s.image.width) +
                        ") are smaller than train.crop_size " + std::to_string(cfg_.train.crop_size));
    }
  }
}

std::size_t Trainer::item_index(std::uint64_t position) {
  const std::uint64_t n = data_.size();
  const std::uint64_t epoch = position / n;
  if (epoch != perm_epoch_) {
    perm_.resize(n);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    Rng rng(stream_seed(cfg_.train.seed, "data", epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(perm_[i - 1], perm_[rng.below(i)]);
    perm_epoch_ = epoch;
  }
  return perm_[position % n];
}

TrainItem Trainer::make_item(std::uint64_t position) {
  const Sample& s = data_[item_index(position)];
  TrainItem item{s.image, s.masks, {}};
  Rng rng(stream_seed(cfg_.train.seed, "augment", position));
  const int size = static_cast<int>(cfg_.train.crop_size);
  const bool can_crop = item.image.height > size || item.image.width > size;
  if (cfg_.train.random_crop || can_crop) {
    // Larger images are always cropped to the training resolution; the
    // offset is random only with random_crop on.
    const int top = cfg_.train.random_crop ? rng.range(0, item.image.height - size) : (item.image.height - size) / 2;
    const int left = cfg_.train.random_crop ? rng.range(0, item.image.width - size) : (item.image.width - size) / 2;
    item.image = crop(item.image, top, left, size, size);
    item.masks.text = crop(item.masks.text, top, left, size, size);
    item.masks.area = derive_box_mask(item.masks.text);
  }
  if (cfg_.train.horizontal_flip && rng.coin(0.5)) {
    item.image = flip_horizontal(item.image);
    item.masks.text = flip_horizontal(item.masks.text);
    item.masks.area = flip_horizontal(item.masks.area);
  }
  item.edges = raw_edges(item.image, cfg_.model);
  return item;
}

StepLog Trainer::step() {
  const std::size_t batch = cfg_.train.batch_size;
  const std::size_t step_no = steps_done_ + 1;
  StepLog out;
  out.step = step_no;
  optim_.zero_grad();
  const float inv_batch = 1.0f / static_cast<float>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const TrainItem item = make_item(static_cast<std::uint64_t>(steps_done_) * batch + b);
    const auto fwd = model_.forward(image_tensor<float>(item.image), edge_tensor<float>(item.edges));
    auto loss = joint_loss(fwd.logits, fwd.area ? &*fwd.area : nullptr, item.masks, cfg_.train.lambda);
    check_finite(loss.report.seg, "seg", step_no);
    check_finite(loss.report.det, "det", step_no);
    scale(loss.total, inv_batch).backward();
    out.seg += loss.report.seg / batch;
    out.det += loss.report.det / batch;
  }
  out.total = out.seg + cfg_.train.lambda * out.det;
  if (cfg_.train.grad_clip > 0.0) optim_.clip_grad_norm(cfg_.train.grad_clip);
  optim_.step();
  steps_done_ = step_no;
  return out;
}

std::vector<StepLog> Trainer::run(std::ostream* log, const std::filesystem::path& checkpoint_dir) {
  std::vector<StepLog> out;
  while (steps_done_ < cfg_.train.max_steps) {
    out.push_back(step());
    if (log) *log << format_step(out.back()) << '\n';
    const std::size_t every = cfg_.train.checkpoint_every;
    if (every > 0 && !checkpoint_dir.empty() && steps_done_ % every == 0) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoint_%06zu.bin", steps_done_);
      save_checkpoint(checkpoint_dir / name);
    }
  }
  if (log) log->flush();
  return out;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  save_model_checkpoint(path, const_cast<Model&>(model_), cfg_, steps_done_, &optim_);
}

Trainer Trainer::resume(const std::filesystem::path& checkpoint, std::vector<Sample> data) {
  const NamedTensors<float> container = load_container<float>(checkpoint);
  LoadedModel loaded = load_model_checkpoint(checkpoint);
  Trainer t(loaded.config, std::move(data));
  // Copy values into the trainer's own parameter tensors.
  auto src = loaded.model.parameters();
  auto dst = t.model_.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    std::copy(src[i].second.data().begin(), src[i].second.data().end(), dst[i].second.data().begin());
  }
  t.optim_.import_state(container, loaded.step);
  t.steps_done_ = loaded.step;
  return t;
}

void save_model_checkpoint(const std::filesystem::path& path, Model& model, const RunConfig& cfg,
                           std::size_t step, const AdamW* optim) {
  NamedTensors<float> c;
  c.metadata = nlohmann::json{{"format", "edgeseg-checkpoint"}, {"version", 1}, {"step", step}, {"config", to_json(cfg)}}
                   .dump();
  for (auto& [name, p] : model.parameters()) c.entries.emplace_back(name, p);
  if (optim) optim->export_state(c);
  save_container(path, c);
}

LoadedModel load_model_checkpoint(const std::filesystem::path& path) {
  NamedTensors<float> c = load_container<float>(path);
  nlohmann::json meta = nlohmann::json::parse(c.metadata, nullptr, false);
  if (meta.is_discarded() || !meta.is_object() || meta.value("format", "") != "edgeseg-checkpoint") {
    throw IoError(path.string() + ": not an edgeseg checkpoint");
  }
  RunConfig cfg = run_config_from_json(meta.at("config"));
  LoadedModel out{cfg, meta.value("step", std::size_t{0}), Model(cfg.model)};
  for (auto& [name, p] : out.model.parameters()) {
    const Tensorf* stored = c.find(name);
    if (!stored) throw IoError(path.string() + ": missing parameter " + name);
    if (stored->shape() != p.shape()) {
      throw IoError(path.string() + ": parameter " + name + " has shape " + to_string(stored->shape()) +
                    ", model expects " + to_string(p.shape()));
    }
    std::copy(stored->data().begin(), stored->data().end(), p.data().begin());
  }
  return out;
}

MetricReport evaluate(const Model& model, const std::vector<Sample>& data, int band_radius) {
  NoGradGuard no_grad;
  MetricAccumulator acc(band_radius);
  for (const auto& s : data) {
    const auto out = model.forward(s.image);
    acc.add(predict_mask(out.logits), s.masks.text);
  }
  return acc.report();
}

RunOutcome train_and_evaluate(const RunConfig& cfg, const std::vector<Sample>& train,
                              const std::vector<Sample>& test) {
  Trainer trainer(cfg, train);
  RunOutcome out;
  out.log = trainer.run();
  out.report = evaluate(trainer.model(), test, cfg.eval.band_radius);
  return out;
}

std::vector<double> default_lambdas() { return {0.1, 0.5, 1.0, 5.0, 10.0}; }

std::vector<SweepRow> lambda_sweep(const RunConfig& base, const std::vector<Sample>& train,
                                   const std::vector<Sample>& test, const std::vector<double>& lambdas,
                                   const ProgressFn& progress) {
  if (lambdas.empty()) throw ConfigError("lambda sweep needs at least one value");
  std::vector<SweepRow> rows;
  for (double lambda : lambdas) {
    RunConfig cfg = base;
    cfg.train.lambda = lambda;
    rows.push_back({lambda, train_and_evaluate(cfg, train, test).report});
    if (progress) {
      std::ostringstream os;
      os << "lambda=" << lambda << " fgIoU=" << rows.back().report.fg_iou;
      progress(os.str());
    }
  }
  return rows;
}

std::string format_sweep(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << std::fixed;
  os << "lambda | fgIoU  | F-score\n";
  for (const auto& r : rows) {
    os << std::setw(6) << std::setprecision(1) << r.lambda << " | " << std::setw(6) << std::setprecision(2)
       << r.report.fg_iou << " | " << std::setprecision(3) << r.report.f_score << '\n';
  }
  return os.str();
}

nlohmann::json sweep_json(const std::vector<SweepRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) out.push_back({{"lambda", r.lambda}, {"report", r.report.to_json()}});
  return out;
}

namespace {

/// Returns a description of every broken ordering for one set of scores
/// indexed as (.,.), EF, EG, EF+EG.
std::vector<std::string> ordering_violations(const double s[4], const std::string& where) {
  std::vector<std::string> out;
  auto fmt = [](double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
  };
  if (s[3] < s[1]) out.push_back(where + ": EF+EG " + fmt(s[3]) + " < EF " + fmt(s[1]));
  if (s[1] < s[0]) out.push_back(where + ": EF " + fmt(s[1]) + " < baseline " + fmt(s[0]));
  if (s[2] > s[0] + 1.0) out.push_back(where + ": EG " + fmt(s[2]) + " exceeds baseline " + fmt(s[0]) + " by > 1");
  return out;
}

}  // namespace

AblationTable ablation_run(const RunConfig& base, const std::vector<Sample>& train,
                           const std::vector<Sample>& test, const std::vector<std::uint64_t>& seeds,
                           const ProgressFn& progress) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  AblationTable table;
  table.seeds = seeds;
  const bool grid[4][2] = {{false, false}, {true, false}, {false, true}, {true, true}};
  for (const auto& cell : grid) {
    AblationRow row;
    row.edge_filtering = cell[0];
    row.edge_guidance = cell[1];
    for (std::uint64_t seed : seeds) {
      RunConfig cfg = base;
      cfg.model.edge_filtering = cell[0];
      cfg.model.edge_guidance = cell[1];
      cfg.train.seed = seed;
      row.per_seed.push_back(train_and_evaluate(cfg, train, test).report);
      if (progress) {
        std::ostringstream os;
        os << "EF=" << cell[0] << " EG=" << cell[1] << " seed=" << seed << " fgIoU=" << row.per_seed.back().fg_iou
           << " edge_fgIoU=" << row.per_seed.back().edge_fg_iou;
        progress(os.str());
      }
    }
    for (const auto& r : row.per_seed) {
      row.mean_fg_iou += r.fg_iou / seeds.size();
      row.mean_f_score += r.f_score / seeds.size();
      row.mean_edge_fg_iou += r.edge_fg_iou / seeds.size();
    }
    table.rows.push_back(std::move(row));
  }
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const double s[4] = {table.rows[0].per_seed[i].fg_iou, table.rows[1].per_seed[i].fg_iou,
                         table.rows[2].per_seed[i].fg_iou, table.rows[3].per_seed[i].fg_iou};
    for (auto& v : ordering_violations(s, "seed " + std::to_string(seeds[i]))) table.violations.push_back(v);
  }
  const double means[4] = {table.rows[0].mean_fg_iou, table.rows[1].mean_fg_iou, table.rows[2].mean_fg_iou,
                           table.rows[3].mean_fg_iou};
  for (auto& v : ordering_violations(means, "mean")) table.violations.push_back(v);
  return table;
}

std::string format_ablation(const AblationTable& table) {
  std::ostringstream os;
  os << std::fixed;
  os << "EF | EG | fgIoU  | F-score | edge fgIoU\n";
  for (const auto& r : table.rows) {
    os << (r.edge_filtering ? "ok" : " -") << " | " << (r.edge_guidance ? "ok" : " -") << " | " << std::setw(6)
       << std::setprecision(2) << r.mean_fg_iou << " | " << std::setw(7) << std::setprecision(3) << r.mean_f_score
       << " | " << std::setprecision(2) << r.mean_edge_fg_iou << '\n';
  }
  os << "seeds:";
  for (auto s : table.seeds) os << ' ' << s;
  os << '\n';
  if (table.violations.empty()) os << "ordering: holds\n";
  for (const auto& v : table.violations) os << "violation: " << v << '\n';
  return os.str();
}

nlohmann::json ablation_json(const AblationTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows) {
    nlohmann::json per_seed = nlohmann::json::array();
    for (const auto& p : r.per_seed) per_seed.push_back(p.to_json());
    rows.push_back({{"edge_filtering", r.edge_filtering},
                    {"edge_guidance", r.edge_guidance},
                    {"mean_fgIoU", r.mean_fg_iou},
                    {"mean_f_score", r.mean_f_score},
                    {"mean_edge_fgIoU", r.mean_edge_fg_iou},
                    {"per_seed", per_seed}});
  }
  return {{"seeds", table.seeds}, {"rows", rows}, {"violations", table.violations}};
}

}  // namespace edgeseg
