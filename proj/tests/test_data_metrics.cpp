#include <doctest.h>

#include <filesystem>

#include "edgeseg/errors.hpp"
#include "edgeseg/kmeans.hpp"
#include "edgeseg/metrics.hpp"
#include "edgeseg/synth.hpp"
#include "gradcheck.hpp"

using namespace edgeseg;

namespace {

Mask from_rows(const std::vector<std::string>& rows) {
  Mask m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) m.at(y, x) = rows[y][x] == '#';
  return m;
}

Mask random_mask(Rng& rng, int h, int w, double p) {
  Mask m(h, w);
  for (auto& v : m.data) v = rng.coin(p) ? 1 : 0;
  return m;
}

struct Brute {
  double tp = 0, fp = 0, fn = 0;
};

Brute brute_counts(const Mask& pred, const Mask& gt, const std::vector<bool>* keep = nullptr) {
  Brute b;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    if (keep && !(*keep)[i]) continue;
    b.tp += pred.data[i] && gt.data[i];
    b.fp += pred.data[i] && !gt.data[i];
    b.fn += !pred.data[i] && gt.data[i];
  }
  return b;
}

/// Band membership by scanning every boundary pixel for every pixel.
std::vector<bool> brute_band(const Mask& gt, int radius) {
  std::vector<std::pair<int, int>> boundary;
  for (int y = 0; y < gt.height; ++y)
    for (int x = 0; x < gt.width; ++x) {
      if (!gt.at(y, x)) continue;
      const int ny[4] = {y - 1, y + 1, y, y}, nx[4] = {x, x, x - 1, x + 1};
      for (int k = 0; k < 4; ++k) {
        if (ny[k] >= 0 && ny[k] < gt.height && nx[k] >= 0 && nx[k] < gt.width && !gt.at(ny[k], nx[k])) {
          boundary.emplace_back(y, x);
          break;
        }
      }
    }
  std::vector<bool> band(gt.data.size(), false);
  for (int y = 0; y < gt.height; ++y)
    for (int x = 0; x < gt.width; ++x)
      for (const auto& [by, bx] : boundary)
        if (std::max(std::abs(by - y), std::abs(bx - x)) <= radius) band[y * gt.width + x] = true;
  return band;
}

}  // namespace

TEST_CASE("synthetic samples are deterministic") {
  SynthConfig cfg;
  const Sample a = synth_sample(cfg, 4), b = synth_sample(cfg, 4);
  CHECK(a.image == b.image);
  CHECK(a.masks.text == b.masks.text);
  CHECK(a.masks.area == b.masks.area);
  CHECK(a.seed == sample_seed(cfg, 4));
  CHECK_FALSE(synth_sample(cfg, 5).image == a.image);
  cfg.seed = 1;
  CHECK_FALSE(synth_sample(cfg, 4).image == a.image);
}

TEST_CASE("zero glyphs give empty masks") {
  SynthConfig cfg;
  cfg.min_glyphs = cfg.max_glyphs = 0;
  for (int i = 0; i < 5; ++i) {
    const Sample s = synth_sample(cfg, i);
    CHECK(s.masks.text.count() == 0);
    CHECK(s.masks.area.count() == 0);
    CHECK(s.strokes.empty());
  }
}

TEST_CASE("rendered mask matches an independent full-canvas rasterisation") {
  SynthConfig cfg;
  cfg.noise_background = false;
  for (int i = 0; i < 25; ++i) {
    const Sample s = synth_sample(cfg, i);
    Mask oracle(cfg.height, cfg.width);
    for (int y = 0; y < cfg.height; ++y)
      for (int x = 0; x < cfg.width; ++x) {
        const Stroke* last = nullptr;
        for (const auto& st : s.strokes)
          if (st.covers(x + 0.5, y + 0.5)) last = &st;
        if (!last) continue;
        oracle.at(y, x) = 1;
        // Without noise the pixel carries the colour of the last glyph stroke.
        for (int c = 0; c < 3; ++c) CHECK(s.image.at(y, x, c) == last->color[c]);
      }
    CHECK(s.masks.text == oracle);
    CHECK(s.masks.area == derive_box_mask(oracle));
    for (std::size_t p = 0; p < oracle.data.size(); ++p) CHECK((!s.masks.text.data[p] || s.masks.area.data[p]));
  }
}

TEST_CASE("synthetic data contains thin strokes") {
  SynthConfig cfg;
  int thin = 0;
  for (int i = 0; i < 20; ++i)
    for (const auto& st : synth_sample(cfg, i).strokes) thin += st.width <= 2.0;
  CHECK(thin > 0);
}

TEST_CASE("dataset round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "edgeseg_dataset_test";
  std::filesystem::remove_all(dir);
  SynthConfig cfg;
  const auto samples = generate_dataset(cfg, 4, 7);
  save_dataset(dir, samples);
  CHECK(std::filesystem::exists(dir / "images" / "000000.png"));
  CHECK(std::filesystem::exists(dir / "boxes" / "000003.png"));
  const auto loaded = load_dataset(dir);
  REQUIRE(loaded.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(loaded[i].image == samples[i].image);
    CHECK(loaded[i].masks.text == samples[i].masks.text);
    CHECK(loaded[i].masks.area == samples[i].masks.area);
    CHECK(loaded[i].seed == samples[i].seed);
    CHECK(loaded[i].glyph_count == samples[i].glyph_count);
  }
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_dataset(dir), IoError);
}

TEST_CASE("metric hand cases") {
  const Mask pred = from_rows({"##", ".."}), gt = from_rows({".#", ".#"});
  CHECK(fg_iou(pred, gt) == doctest::Approx(100.0 / 3.0));
  CHECK(f_score(pred, gt).f_score == doctest::Approx(0.5));

  CHECK(fg_iou(gt, gt) == 100.0);
  const auto perfect = f_score(gt, gt);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f_score == 1.0);
  CHECK(fg_iou(from_rows({"#.", ".."}), from_rows({"..", ".#"})) == 0.0);

  const Mask big = from_rows({"####", "####", "....", "...."}), small = from_rows({"##..", "##..", "....", "...."});
  const auto sup = f_score(big, small);
  CHECK(sup.precision == 0.5);
  CHECK(sup.recall == 1.0);
  CHECK(sup.f_score == doctest::Approx(2.0 / 3.0));

  const Mask empty(2, 2);
  CHECK(fg_iou(empty, empty) == 100.0);
  CHECK(f_score(empty, empty).f_score == 1.0);
  CHECK(fg_iou(empty, gt) == 0.0);
  CHECK(f_score(empty, gt).f_score == 0.0);

  CHECK_THROWS_AS(fg_iou(Mask(2, 3), Mask(2, 2)), ShapeError);
}

TEST_CASE("metrics against brute force on random pairs") {
  Rng rng(11);
  PixelCounts global;
  Brute total;
  for (int i = 0; i < 100; ++i) {
    const int h = rng.range(1, 24), w = rng.range(1, 24);
    const Mask p = random_mask(rng, h, w, rng.uniform(0, 1)), g = random_mask(rng, h, w, rng.uniform(0, 1));
    const Brute b = brute_counts(p, g);
    const double union_ = b.tp + b.fp + b.fn;
    CHECK(fg_iou(p, g) == (union_ == 0 ? 100.0 : 100.0 * b.tp / union_));
    global.add(p, g);
    total.tp += b.tp;
    total.fp += b.fp;
    total.fn += b.fn;
  }
  CHECK(global.tp == total.tp);
  CHECK(global.fp == total.fp);
  CHECK(global.fn == total.fn);
  const auto pr = f_score(global);
  CHECK(pr.precision == total.tp / (total.tp + total.fp));
  CHECK(pr.recall == total.tp / (total.tp + total.fn));
  const double p = pr.precision, r = pr.recall;
  CHECK(std::abs(fg_iou(global) / 100.0 - p * r / (p + r - p * r)) < 1e-9);
}

TEST_CASE("metrics are invariant under a shared pixel permutation") {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const Mask p = random_mask(rng, 9, 13, 0.4), g = random_mask(rng, 9, 13, 0.3);
    std::vector<std::size_t> perm(p.data.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    Mask pp(9, 13), gp(9, 13);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      pp.data[i] = p.data[perm[i]];
      gp.data[i] = g.data[perm[i]];
    }
    CHECK(fg_iou(pp, gp) == fg_iou(p, g));
    CHECK(f_score(pp, gp).f_score == f_score(p, g).f_score);
  }
}

TEST_CASE("edge band") {
  Mask square(12, 12);
  for (int y = 2; y < 10; ++y)
    for (int x = 2; x < 10; ++x) square.at(y, x) = 1;
  CHECK(mask_boundary(square).count() == 28);
  const Mask band = edge_band(square, 1);
  CHECK(band.count() == 84);
  const auto oracle = brute_band(square, 1);
  for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(bool(band.data[i]) == oracle[i]);

  Rng rng(13);
  const Mask pred = random_mask(rng, 12, 12, 0.5);
  const MetricReport r = edge_band_metrics(pred, square, 1);
  const Brute b = brute_counts(pred, square, &oracle);
  CHECK_FALSE(r.edge_band_empty);
  CHECK(r.edge_counts.tp == b.tp);
  CHECK(r.edge_counts.fp == b.fp);
  CHECK(r.edge_counts.fn == b.fn);
  CHECK(r.edge_fg_iou == doctest::Approx(100.0 * b.tp / (b.tp + b.fp + b.fn)));

  // No boundary at all.
  CHECK(edge_band_metrics(pred, Mask(12, 12), 2).edge_band_empty);
  Mask full(6, 6);
  std::fill(full.data.begin(), full.data.end(), 1);
  CHECK(mask_boundary(full).count() == 0);

  // A band covering the image reproduces the global metrics.
  const MetricReport wide = edge_band_metrics(pred, square, 12);
  CHECK(wide.edge_fg_iou == fg_iou(pred, square));
  CHECK(wide.edge_f_score == f_score(pred, square).f_score);

  for (int trial = 0; trial < 20; ++trial) {
    const Mask g = random_mask(rng, 10, 15, 0.3);
    const int radius = rng.range(1, 3);
    const Mask fast = edge_band(g, radius);
    const auto slow = brute_band(g, radius);
    for (std::size_t i = 0; i < slow.size(); ++i) CHECK(bool(fast.data[i]) == slow[i]);
  }
  CHECK_THROWS_AS(edge_band(square, 0), ConfigError);
}

TEST_CASE("accumulator report") {
  MetricAccumulator acc(2);
  const Mask pred = from_rows({"##", ".."}), gt = from_rows({".#", ".#"});
  acc.add(pred, gt);
  acc.add(gt, gt);
  const MetricReport r = acc.report();
  CHECK(r.images == 2);
  CHECK(r.fg_iou == doctest::Approx(60.0));
  const std::string text = r.to_text();
  CHECK(text.find("fgIoU=60.00") != std::string::npos);
  CHECK(text.find("accumulation=global") != std::string::npos);
  CHECK(r.to_json().at("images") == 2);
}

TEST_CASE("k-means") {
  Rng rng(14);
  SUBCASE("distinct values") {
    Eigen::MatrixXd pts(9, 2);
    for (int i = 0; i < 9; ++i) pts.row(i) << (i % 3) * 5.0, (i % 3) * -2.0;
    const auto r = kmeans(pts, 3, rng);
    CHECK(r.inertia.back() == 0.0);
    CHECK(r.converged);
    for (int i = 0; i < 9; ++i) CHECK(r.labels[i] == r.labels[i % 3]);
    CHECK(r.labels[0] != r.labels[1]);
    CHECK(r.labels[1] != r.labels[2]);
  }
  SUBCASE("two blobs") {
    Eigen::MatrixXd pts(60, 3);
    for (int i = 0; i < 60; ++i)
      for (int d = 0; d < 3; ++d) pts(i, d) = (i < 30 ? -10.0 : 10.0) + rng.normal();
    const auto r = kmeans(pts, 2, rng);
    for (int i = 0; i < 60; ++i) {
      CHECK(r.labels[i] == r.labels[i < 30 ? 0 : 59]);
      // Brute-force nearest-centre check of the final assignment.
      int best = 0;
      for (int c = 1; c < 2; ++c)
        if ((pts.row(i) - r.centers.row(c)).squaredNorm() < (pts.row(i) - r.centers.row(best)).squaredNorm()) best = c;
      CHECK(r.labels[i] == best);
    }
    CHECK(r.labels[0] != r.labels[59]);
  }
  SUBCASE("inertia never increases") {
    Eigen::MatrixXd pts = Eigen::MatrixXd::Random(200, 4);
    const auto r = kmeans(pts, 5, rng);
    for (std::size_t i = 1; i < r.inertia.size(); ++i) CHECK(r.inertia[i] <= r.inertia[i - 1] + 1e-12);
    CHECK(r.iterations <= 100);
  }
  SUBCASE("errors and feature maps") {
    CHECK_THROWS_AS(kmeans(Eigen::MatrixXd::Zero(2, 2), 3, rng), ConfigError);
    CHECK_THROWS_AS(kmeans(Eigen::MatrixXd::Zero(4, 2), 1, rng), ConfigError);
    Tensorf feats(Shape{2, 2, 3});
    for (std::size_t i = 0; i < 6; ++i) {
      feats.data()[i] = i < 3 ? 0.0f : 4.0f;
      feats.data()[6 + i] = 1.0f;
    }
    const auto r = kmeans_features(feats, 2, rng);
    CHECK(r.labels.size() == 6);
    CHECK(r.labels[0] == r.labels[2]);
    CHECK(r.labels[3] == r.labels[5]);
    CHECK(r.labels[0] != r.labels[3]);
  }
}
