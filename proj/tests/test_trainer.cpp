#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "edgeseg/canny.hpp"
#include "edgeseg/errors.hpp"
#include "edgeseg/trainer.hpp"

using namespace edgeseg;

namespace {

RunConfig small_config() {
  RunConfig cfg;
  cfg.model = ModelConfig::tiny();
  cfg.synth.height = cfg.synth.width = 32;
  cfg.synth.min_glyphs = 1;
  cfg.synth.max_glyphs = 3;
  cfg.train.crop_size = 32;
  cfg.train.batch_size = 2;
  cfg.train.max_steps = 3;
  cfg.train.learning_rate = 1e-3;
  return cfg;
}

std::vector<std::vector<float>> snapshot(Model& m) {
  std::vector<std::vector<float>> out;
  for (auto& [name, p] : m.parameters()) out.emplace_back(p.data().begin(), p.data().end());
  return out;
}

}  // namespace

TEST_CASE("defaults") {
  const TrainConfig t;
  CHECK(t.learning_rate == 6e-5);
  CHECK(t.weight_decay == 0.01);
  CHECK(t.lambda == 1.0);
  CHECK(t.beta1 == 0.9);
  CHECK(t.beta2 == 0.999);
  CHECK(t.epsilon == 1e-8);
  CHECK(t.grad_clip == 0.0);
  CHECK(default_lambdas() == std::vector<double>{0.1, 0.5, 1.0, 5.0, 10.0});
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  RunConfig cfg = small_config();
  cfg.train.learning_rate = 0.0;
  Trainer t(cfg, generate_dataset(cfg.synth, 4));
  const auto before = snapshot(t.model());
  t.run();
  CHECK(t.steps_done() == 3);
  CHECK(snapshot(t.model()) == before);
}

TEST_CASE("decoupled weight decay contracts exactly") {
  TrainConfig tc;
  tc.learning_rate = 0.05;
  tc.weight_decay = 0.1;
  Tensorf p(Shape{5}, std::vector<float>{1.0f, -2.0f, 0.5f, 3.25f, 0.0f});
  p.set_requires_grad(true);
  AdamW opt({{"p", p}}, tc);
  const float decay = static_cast<float>(1.0 - 0.05 * 0.1);
  std::vector<float> expected(p.data().begin(), p.data().end());
  for (int s = 0; s < 4; ++s) {
    opt.zero_grad();
    opt.step();
    for (auto& v : expected) v *= decay;
    CHECK(std::vector<float>(p.data().begin(), p.data().end()) == expected);
  }
  CHECK(opt.steps() == 4);
}

TEST_CASE("first Adam step moves by lr times sign of gradient") {
  TrainConfig tc;
  tc.learning_rate = 0.01;
  tc.weight_decay = 0.0;
  Tensorf p(Shape{3}, std::vector<float>{1.0f, 1.0f, 1.0f});
  p.set_requires_grad(true);
  AdamW opt({{"p", p}}, tc);
  sum(mul(p, Tensorf(Shape{3}, std::vector<float>{2.0f, -3.0f, 0.5f}))).backward();
  opt.step();
  CHECK(p.data()[0] == doctest::Approx(0.99).epsilon(1e-6));
  CHECK(p.data()[1] == doctest::Approx(1.01).epsilon(1e-6));
  CHECK(p.data()[2] == doctest::Approx(0.99).epsilon(1e-6));
}

TEST_CASE("gradient clipping") {
  TrainConfig tc;
  Tensorf p(Shape{2}, std::vector<float>{0.0f, 0.0f});
  p.set_requires_grad(true);
  AdamW opt({{"p", p}}, tc);
  sum(mul(p, Tensorf(Shape{2}, std::vector<float>{3.0f, 4.0f}))).backward();
  CHECK(opt.clip_grad_norm(1.0) == doctest::Approx(5.0));
  CHECK(p.grad()[0] == doctest::Approx(0.6));
  CHECK(p.grad()[1] == doctest::Approx(0.8));
}

TEST_CASE("training is bitwise reproducible") {
  const RunConfig cfg = small_config();
  const auto data = generate_dataset(cfg.synth, 4);
  Trainer a(cfg, data), b(cfg, data);
  std::ostringstream la, lb;
  a.run(&la);
  b.run(&lb);
  CHECK(la.str() == lb.str());
  CHECK(snapshot(a.model()) == snapshot(b.model()));

  RunConfig other = cfg;
  other.train.seed = 9;
  Trainer c(other, data);
  std::ostringstream lc;
  c.run(&lc);
  CHECK(lc.str() != la.str());
}

TEST_CASE("checkpoint resume equals an uninterrupted run") {
  RunConfig cfg = small_config();
  cfg.train.max_steps = 4;
  const auto data = generate_dataset(cfg.synth, 3);
  const auto dir = std::filesystem::temp_directory_path() / "edgeseg_trainer_test";
  std::filesystem::create_directories(dir);

  Trainer full(cfg, data);
  std::ostringstream full_log;
  for (int i = 0; i < 2; ++i) full_log << format_step(full.step()) << '\n';
  full.save_checkpoint(dir / "mid.bin");
  full.run(&full_log);

  Trainer resumed = Trainer::resume(dir / "mid.bin", data);
  CHECK(resumed.steps_done() == 2);
  std::ostringstream tail;
  resumed.run(&tail);
  CHECK(full_log.str().substr(full_log.str().find('\n', full_log.str().find('\n') + 1) + 1) == tail.str());
  CHECK(snapshot(resumed.model()) == snapshot(full.model()));

  const LoadedModel loaded = load_model_checkpoint(dir / "mid.bin");
  CHECK(loaded.step == 2);
  CHECK(to_json(loaded.config) == to_json(cfg));
  std::filesystem::remove_all(dir);
}

TEST_CASE("non-finite loss aborts with step and term") {
  const RunConfig cfg = small_config();
  Trainer t(cfg, generate_dataset(cfg.synth, 2));
  t.step();
  for (auto& [name, p] : t.model().parameters()) {
    if (name == "decoder.classify.bias") p.data()[0] = std::numeric_limits<float>::quiet_NaN();
  }
  try {
    t.step();
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step 2") != std::string::npos);
    CHECK(msg.find("seg") != std::string::npos);
  }
}

TEST_CASE("augmentation keeps image, masks and edges consistent") {
  RunConfig cfg = small_config();
  cfg.synth.height = cfg.synth.width = 48;
  cfg.train.random_crop = true;
  cfg.train.horizontal_flip = true;
  Trainer t(cfg, generate_dataset(cfg.synth, 3));
  int flipped = 0;
  for (std::uint64_t pos = 0; pos < 16; ++pos) {
    const TrainItem item = t.make_item(pos);
    CHECK(item.image.height == 32);
    CHECK(item.image.width == 32);
    CHECK(item.edges == canny(item.image, cfg.model.canny_low, cfg.model.canny_high));
    CHECK(item.masks.area == derive_box_mask(item.masks.text));
    CHECK(t.make_item(pos).image == item.image);
    // Locate the crop in the source image, either as-is or mirrored.
    const Sample src = synth_sample(cfg.synth, t.item_index(pos));
    bool found = false;
    for (int mirrored = 0; mirrored < 2 && !found; ++mirrored) {
      const ImageU8 img = mirrored ? flip_horizontal(item.image) : item.image;
      const Mask txt = mirrored ? flip_horizontal(item.masks.text) : item.masks.text;
      for (int top = 0; top <= 16 && !found; ++top)
        for (int left = 0; left <= 16 && !found; ++left)
          if (crop(src.image, top, left, 32, 32) == img && crop(src.masks.text, top, left, 32, 32) == txt) {
            found = true;
            flipped += mirrored;
          }
    }
    CHECK(found);
  }
  CHECK(flipped > 0);
  CHECK(flipped < 16);
}

TEST_CASE("each epoch visits every sample once") {
  RunConfig cfg = small_config();
  Trainer t(cfg, generate_dataset(cfg.synth, 5));
  for (std::uint64_t epoch = 0; epoch < 3; ++epoch) {
    std::vector<int> seen(5, 0);
    for (std::uint64_t i = 0; i < 5; ++i) ++seen[t.item_index(epoch * 5 + i)];
    CHECK(seen == std::vector<int>(5, 1));
  }
}

TEST_CASE("single-sample loss decreases after warm-up") {
  RunConfig cfg = small_config();
  cfg.train.batch_size = 1;
  cfg.train.learning_rate = 6e-5;
  cfg.train.max_steps = 400;
  cfg.train.random_crop = false;
  cfg.train.horizontal_flip = false;
  Trainer t(cfg, generate_dataset(cfg.synth, 1));
  const auto log = t.run();
  const std::size_t warmup = 50, window = 50;
  double worst = -1e9;
  for (std::size_t i = warmup; i + window < log.size(); ++i) worst = std::max(worst, log[i + window].total - log[i].total);
  CHECK(worst <= 1e-3);
  CHECK(log.back().total < log.front().total);
}

TEST_CASE("sweep and ablation harness shapes") {
  RunConfig cfg = small_config();
  cfg.train.max_steps = 2;
  const auto train = generate_dataset(cfg.synth, 2), test = generate_dataset(cfg.synth, 2, 100);

  const auto rows = lambda_sweep(cfg, train, test, {0.5, 2.0});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].lambda == 0.5);
  RunConfig single = cfg;
  single.train.lambda = 2.0;
  const RunOutcome plain = train_and_evaluate(single, train, test);
  CHECK(rows[1].report.fg_iou == plain.report.fg_iou);
  CHECK(rows[1].report.counts.tp == plain.report.counts.tp);
  CHECK(format_sweep(rows).find("0.5") != std::string::npos);
  CHECK(sweep_json(rows).size() == 2);

  const AblationTable table = ablation_run(cfg, train, test, {0, 1});
  REQUIRE(table.rows.size() == 4);
  const bool order[4][2] = {{false, false}, {true, false}, {false, true}, {true, true}};
  for (int i = 0; i < 4; ++i) {
    CHECK(table.rows[i].edge_filtering == order[i][0]);
    CHECK(table.rows[i].edge_guidance == order[i][1]);
    REQUIRE(table.rows[i].per_seed.size() == 2);
    CHECK(table.rows[i].mean_fg_iou ==
          doctest::Approx((table.rows[i].per_seed[0].fg_iou + table.rows[i].per_seed[1].fg_iou) / 2));
  }
  CHECK(ablation_json(table).at("rows").size() == 4);
}
