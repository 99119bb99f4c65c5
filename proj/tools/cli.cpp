#include "cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "edgeseg/canny.hpp"
#include "edgeseg/errors.hpp"
#include "edgeseg/kmeans.hpp"
#include "edgeseg/png_io.hpp"
#include "edgeseg/trainer.hpp"

namespace edgeseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON config file; missing keys keep their defaults");
  app->add_option("--set", c.overrides, "override a config field, e.g. --set train.lambda=0.5 (repeatable)");
  app->add_option("--seed", c.seed, "root seed; sets train.seed and synth.seed");
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path.string() + ": not valid JSON");
  return j;
}

/// File config, then --set overrides, then --seed; echoed to `err`.
RunConfig effective_config(const Common& c, std::ostream& err, json base = json::object()) {
  json doc = c.config_path.empty() ? base : read_json(c.config_path);
  for (const auto& o : c.overrides) apply_override(doc, o);
  RunConfig cfg = run_config_from_json(doc);
  if (c.seed >= 0) {
    cfg.train.seed = static_cast<std::uint64_t>(c.seed);
    cfg.synth.seed = static_cast<std::uint64_t>(c.seed);
  }
  err << "effective config: " << to_json(cfg).dump() << '\n';
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

/// Bilinear resize of a [1 x h x w] map to the image resolution.
EdgeMap full_resolution(const Tensorf& map, int height, int width) {
  return to_edge_map(bilinear_resize(map, static_cast<std::size_t>(height), static_cast<std::size_t>(width)));
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Edge-aware scene text segmentation on synthetic data", "edgeseg"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "print help for every subcommand");

  Common common;

  // synth
  std::string synth_out;
  std::size_t synth_count = 10;
  std::uint64_t first_index = 0;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, common);
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--count", synth_count, "number of samples")->capture_default_str();
  synth->add_option("--first-index", first_index, "index of the first sample")->capture_default_str();

  // train
  std::string data_dir, out_dir, resume_path;
  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, common);
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out_dir, "output directory (log, summary, checkpoint)")->required();
  train->add_option("--resume", resume_path, "continue from a checkpoint; its config wins");

  // eval
  std::string checkpoint, json_path;
  int band_radius = -1;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--json", json_path, "also write the report as JSON");
  eval->add_option("--band-radius", band_radius, "edge band radius (default from checkpoint config)");

  // segment
  std::string image_path, out_path, intermediates;
  auto* segment = app.add_subcommand("segment", "predict the text mask of one image");
  segment->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  segment->add_option("--image", image_path, "input PNG")->required();
  segment->add_option("--out", out_path, "output mask PNG")->required();
  segment->add_option("--intermediates", intermediates, "directory for edges_raw/area/edges_filtered PNGs");

  // edges
  double low = kCannyLow, high = kCannyHigh;
  auto* edges = app.add_subcommand("edges", "run the Canny detector");
  edges->add_option("--image", image_path, "input PNG")->required();
  edges->add_option("--out", out_path, "output edge PNG")->required();
  edges->add_option("--low", low, "low threshold")->capture_default_str();
  edges->add_option("--high", high, "high threshold")->capture_default_str();

  // cluster
  int stage = 1, k = 3;
  std::uint64_t cluster_seed = 0;
  auto* cluster = app.add_subcommand("cluster", "k-means over one encoder stage's features");
  cluster->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  cluster->add_option("--image", image_path, "input PNG")->required();
  cluster->add_option("--out", out_path, "output label PNG")->required();
  cluster->add_option("--stage", stage, "encoder stage 1-4")->capture_default_str()->check(CLI::Range(1, 4));
  cluster->add_option("--k", k, "cluster count")->capture_default_str();
  cluster->add_option("--seed", cluster_seed, "seed for the first centre")->capture_default_str();

  // ablate
  std::string train_dir, test_dir;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  auto* ablate = app.add_subcommand("ablate", "train and score the four EF/EG variants");
  add_common(ablate, common);
  ablate->add_option("--train", train_dir, "training dataset")->required();
  ablate->add_option("--test", test_dir, "held-out dataset")->required();
  ablate->add_option("--out", out_dir, "output directory")->required();
  ablate->add_option("--seeds", seeds, "training seeds")->delimiter(',')->capture_default_str();

  // sweep
  std::vector<double> lambdas = default_lambdas();
  auto* sweep = app.add_subcommand("sweep", "train and score one model per lambda");
  add_common(sweep, common);
  sweep->add_option("--train", train_dir, "training dataset")->required();
  sweep->add_option("--test", test_dir, "held-out dataset")->required();
  sweep->add_option("--out", out_dir, "output directory")->required();
  sweep->add_option("--lambdas", lambdas, "lambda values")->delimiter(',')->capture_default_str();

  std::vector<std::string> argv_rest(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(argv_rest.begin(), argv_rest.end());
  try {
    app.parse(argv_rest);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (synth->parsed()) {
      const RunConfig cfg = effective_config(common, err);
      const auto samples = generate_dataset(cfg.synth, synth_count, first_index);
      save_dataset(synth_out, samples);
      out << "wrote " << samples.size() << " samples to " << synth_out << '\n';
    } else if (train->parsed()) {
      const auto start = std::chrono::steady_clock::now();
      std::optional<RunConfig> cfg;
      if (resume_path.empty()) cfg = effective_config(common, err);
      std::vector<Sample> data = load_dataset(data_dir);
      make_dir(out_dir);
      Trainer trainer = cfg ? Trainer(*cfg, std::move(data)) : Trainer::resume(resume_path, std::move(data));
      if (!resume_path.empty()) err << "resumed at step " << trainer.steps_done() << '\n';
      write_text(fs::path(out_dir) / "config.json", to_json(trainer.config()).dump(2) + "\n");
      std::ofstream log(fs::path(out_dir) / "train.log", resume_path.empty() ? std::ios::trunc : std::ios::app);
      if (!log) throw IoError("cannot write " + (fs::path(out_dir) / "train.log").string());
      const auto steps = trainer.run(&log, out_dir);
      trainer.save_checkpoint(fs::path(out_dir) / "checkpoint.bin");
      json summary{{"steps", trainer.steps_done()}, {"parameters", trainer.model().parameter_count()}};
      if (!steps.empty()) {
        summary["final"] = {{"seg", steps.back().seg}, {"det", steps.back().det}, {"total", steps.back().total}};
      }
      write_text(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
      err << "trained " << steps.size() << " steps in " << seconds_since(start) << " s\n";
      out << summary.dump() << '\n';
    } else if (eval->parsed()) {
      LoadedModel loaded = load_model_checkpoint(checkpoint);
      const int radius = band_radius > 0 ? band_radius : loaded.config.eval.band_radius;
      const MetricReport report = evaluate(loaded.model, load_dataset(data_dir), radius);
      out << report.to_text();
      if (!json_path.empty()) write_text(json_path, report.to_json().dump(2) + "\n");
    } else if (segment->parsed()) {
      LoadedModel loaded = load_model_checkpoint(checkpoint);
      const ImageU8 image = load_png(image_path);
      NoGradGuard no_grad;
      const EdgeMap raw = raw_edges(image, loaded.config.model);
      const auto fwd = loaded.model.forward(image_tensor<float>(image), edge_tensor<float>(raw));
      const Mask mask = predict_mask(fwd.logits);
      save_mask(out_path, mask);
      if (!intermediates.empty()) {
        make_dir(intermediates);
        save_map(fs::path(intermediates) / "edges_raw.png", raw);
        if (fwd.area) {
          save_map(fs::path(intermediates) / "area.png",
                   full_resolution(fwd.area->foreground(), image.height, image.width));
        }
        if (fwd.edges.defined()) save_map(fs::path(intermediates) / "edges_filtered.png", to_edge_map(fwd.edges));
      }
      out << "text pixels: " << mask.count() << " of " << mask.data.size() << '\n';
    } else if (edges->parsed()) {
      const EdgeMap map = canny(load_png(image_path), low, high);
      save_map(out_path, map);
      std::size_t on = 0;
      for (float v : map.values) on += v > 0.5f;
      out << "edge pixels: " << on << " (low " << low << ", high " << high << ")\n";
    } else if (cluster->parsed()) {
      LoadedModel loaded = load_model_checkpoint(checkpoint);
      const ImageU8 image = load_png(image_path);
      NoGradGuard no_grad;
      const auto fwd = loaded.model.forward(image);
      const Tensorf& feats = fwd.encoder.stages[stage - 1];
      Rng rng(stream_seed(cluster_seed, "cluster"));
      const KMeansResult r = kmeans_features(feats, k, rng);
      const int h = static_cast<int>(feats.dim(1)), w = static_cast<int>(feats.dim(2));
      ImageU8 labels(image.height, image.width, 1);
      for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
          const int label = r.labels[static_cast<std::size_t>(y * h / image.height) * w + x * w / image.width];
          labels.at(y, x) = static_cast<std::uint8_t>(label * 255 / (k - 1));
        }
      }
      save_png(out_path, labels);
      out << "stage " << stage << " features " << to_string(feats.shape()) << ", k=" << k << ", iterations "
          << r.iterations << ", inertia " << r.inertia.back() << '\n';
    } else if (ablate->parsed()) {
      const RunConfig cfg = effective_config(common, err);
      make_dir(out_dir);
      const AblationTable table = ablation_run(cfg, load_dataset(train_dir), load_dataset(test_dir), seeds,
                                               [&](const std::string& line) { err << line << std::endl; });
      write_text(fs::path(out_dir) / "ablation.txt", format_ablation(table));
      write_text(fs::path(out_dir) / "ablation.json", ablation_json(table).dump(2) + "\n");
      out << format_ablation(table);
    } else if (sweep->parsed()) {
      const RunConfig cfg = effective_config(common, err);
      make_dir(out_dir);
      const auto rows = lambda_sweep(cfg, load_dataset(train_dir), load_dataset(test_dir), lambdas,
                                     [&](const std::string& line) { err << line << std::endl; });
      write_text(fs::path(out_dir) / "sweep.txt", format_sweep(rows));
      write_text(fs::path(out_dir) / "sweep.json", sweep_json(rows).dump(2) + "\n");
      out << format_sweep(rows);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kIoError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInternalError;
  }
  return kOk;
}

}  // namespace edgeseg::cli
