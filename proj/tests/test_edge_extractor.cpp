#include <doctest.h>

#include <cmath>

#include "edgeseg/edge_extractor.hpp"
#include "edgeseg/errors.hpp"
#include "gradcheck.hpp"

using namespace edgeseg;
using namespace edgeseg::testing;

namespace {

const std::array<std::size_t, 4> kToy{16, 32, 64, 128};

AreaMask<double> constant_area(std::size_t h, std::size_t w, double fg_logit) {
  AreaMask<double> a;
  std::vector<double> v(2 * h * w, 0.0);
  std::fill(v.begin() + h * w, v.end(), fg_logit);
  a.logits = Tensord(Shape{2, h, w}, v);
  a.probs = softmax(a.logits, 0);
  return a;
}

}  // namespace

TEST_CASE("backbone strides and channels") {
  DetectorBackbone<float> bb(3, kToy);
  Rng rng(0);
  bb.init(rng);
  Rng data(1);
  Tensorf x(Shape{3, 64, 64});
  for (auto& v : x.data()) v = static_cast<float>(data.normal());
  const auto f = bb(x);
  CHECK(f.stages[0].shape() == Shape{16, 16, 16});
  CHECK(f.stages[1].shape() == Shape{32, 8, 8});
  CHECK(f.stages[2].shape() == Shape{64, 4, 4});
  CHECK(f.stages[3].shape() == Shape{128, 2, 2});
  CHECK_THROWS_AS(bb(Tensorf(Shape{3, 48, 64})), ShapeError);
}

TEST_CASE("zero input gives constant features") {
  DetectorBackbone<double> bb(3, {4, 8, 8, 8});
  Rng rng(2);
  bb.init(rng);
  const auto f = bb(Tensord(Shape{3, 32, 32}));
  for (const auto& s : f.stages) {
    for (double v : s.data()) CHECK(v == s.data()[0]);
  }
}

TEST_CASE("every backbone parameter receives gradient") {
  TextEdgeExtractor<double> ex({4, 8, 8, 8}, 1.0);
  Rng rng(3);
  ex.init(rng);
  Tensord x = random_tensor({3, 32, 32}, rng, 1.0, false);
  Tensord edges(Shape{1, 32, 32});
  for (auto& v : edges.data()) v = rng.coin(0.3) ? 1.0 : 0.0;
  const auto out = ex(x, edges);
  project(out.area.logits, 17).backward();
  std::size_t count = 0;
  ex.visit("extractor", [&](const std::string& name, Tensord& p) {
    double norm = 0;
    for (double g : p.grad()) norm += g * g;
    CHECK_MESSAGE(norm > 0.0, name);
    ++count;
  });
  CHECK(count > 10);
}

TEST_CASE("detection head") {
  DetectorBackbone<double> bb(3, {4, 8, 8, 8});
  DetectionHead<double> head({4, 8, 8, 8});
  Rng rng(4);
  bb.init(rng);
  head.init(rng);
  const auto area = head(bb(random_tensor({3, 64, 32}, rng, 1.0, false)));
  CHECK(area.probs.shape() == Shape{2, 16, 8});
  const std::size_t plane = 16 * 8;
  for (std::size_t i = 0; i < plane; ++i) {
    CHECK(area.probs.data()[i] + area.probs.data()[plane + i] == doctest::Approx(1.0).epsilon(1e-12));
  }

  // Weights zero, bias (0, +10): foreground saturates.
  head.classify.zero();
  head.classify.bias.data()[1] = 10.0;
  const auto sat = head(bb(random_tensor({3, 32, 32}, rng, 1.0, false)));
  const Tensord fg = sat.foreground();
  for (double v : fg.data()) CHECK(v > 0.9999);
}

TEST_CASE("soft argmax values") {
  EdgeMap half(2, 2, 0.5f);
  for (float v : soft_argmax(half, 1.0).values) CHECK(v == doctest::Approx(0.5));

  EdgeMap bin(1, 2);
  bin.values = {0.0f, 1.0f};
  const EdgeMap t1 = soft_argmax(bin, 1.0);
  CHECK(t1.values[0] == doctest::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-6));
  CHECK(t1.values[1] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-6));
  CHECK(t1.values[0] == doctest::Approx(0.269).epsilon(1e-3));
  CHECK(t1.values[1] == doctest::Approx(0.731).epsilon(1e-3));

  const EdgeMap cold = soft_argmax(bin, 0.01);
  CHECK(cold.values[0] < 1e-6);
  CHECK(cold.values[1] > 1 - 1e-6);

  CHECK_THROWS_AS(soft_argmax(bin, 0.0), ConfigError);
  CHECK_THROWS_AS(soft_argmax(bin, -1.0), ConfigError);
}

TEST_CASE("filter edges") {
  Rng rng(5);
  Tensord soft(Shape{1, 8, 8});
  for (auto& v : soft.data()) v = rng.uniform();

  const Tensord ones = filter_edges(soft, constant_area(2, 2, 80.0));
  for (std::size_t i = 0; i < soft.size(); ++i) CHECK(ones.data()[i] == doctest::Approx(soft.data()[i]));
  const Tensord zeros = filter_edges(soft, constant_area(2, 2, -80.0));
  for (double v : zeros.data()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));

  // Pixel-loop oracle on same-resolution inputs.
  AreaMask<double> area;
  area.logits = random_tensor({2, 8, 8}, rng, 2.0, false);
  area.probs = softmax(area.logits, 0);
  const Tensord out = filter_edges(soft, area);
  for (std::size_t i = 0; i < 64; ++i) {
    const double fg = area.probs.data()[64 + i];
    CHECK(out.data()[i] == doctest::Approx(fg * soft.data()[i]).epsilon(1e-14));
    CHECK(out.data()[i] <= std::min(fg, soft.data()[i]) + 1e-15);
  }

  // Raising one foreground probability never lowers the product there.
  AreaMask<double> more = area;
  more.logits = area.logits.detach();
  more.logits.data()[64 + 10] += 1.0;
  more.probs = softmax(more.logits, 0);
  CHECK(filter_edges(soft, more).data()[10] >= out.data()[10]);

  EdgeMap e(4, 4, 0.6f), fg(2, 2, 0.5f);
  for (float v : filter_edges(e, fg).values) CHECK(v == doctest::Approx(0.3));
}

TEST_CASE("gradients through soft argmax and filtering") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    Tensord edges = random_tensor({1, 8, 8}, rng);
    for (auto& v : edges.data()) v = rng.uniform();
    Tensord logits = random_tensor({2, 2, 2}, rng);
    const auto r = check_entries({edges, logits}, [&] {
      AreaMask<double> a;
      a.logits = logits;
      a.probs = softmax(logits, 0);
      return project(filter_edges(soft_argmax(edges, 0.7), a), 21);
    });
    CHECK_MESSAGE(r.worst < 1e-4, r.where);
  }
}

TEST_CASE("a loss on filtered edges reaches the detector") {
  TextEdgeExtractor<double> ex({4, 8, 8, 8}, 1.0);
  Rng rng(6);
  ex.init(rng);
  Tensord raw(Shape{1, 32, 32});
  for (auto& v : raw.data()) v = rng.coin(0.2) ? 1.0 : 0.0;
  const auto out = ex(random_tensor({3, 32, 32}, rng, 1.0, false), raw);
  sum(out.filtered_edges).backward();
  double norm = 0;
  for (double g : ex.backbone.stem.weight.grad()) norm += g * g;
  CHECK(norm > 0.0);
  norm = 0;
  for (double g : ex.head.classify.weight.grad()) norm += g * g;
  CHECK(norm > 0.0);
}
