#pragma once

#include <set>

#include "edgeseg/loss.hpp"
#include "edgeseg/model.hpp"
#include "gradcheck.hpp"

namespace edgeseg::testing {

/// Random mask with a few solid blocks, so both classes and box targets
/// are non-trivial.
inline Mask block_mask(Rng& rng, int h, int w, int blocks = 3) {
  Mask m(h, w);
  for (int b = 0; b < blocks; ++b) {
    const int y = rng.range(0, h - 4), x = rng.range(0, w - 4);
    const int bh = rng.range(1, std::min(8, h - y)), bw = rng.range(1, std::min(8, w - x));
    for (int yy = y; yy < y + bh; ++yy)
      for (int xx = x; xx < x + bw; ++xx) m.at(yy, xx) = 1;
  }
  return m;
}

/// Full tiny model in double precision; every parameter is nudged off its
/// initial value so zero-initialised projections carry gradient too.
struct TinyModelCase {
  EdgeSegModel<double> model;
  Tensord image;
  Tensord edges;
  MaskPair gt;

  explicit TinyModelCase(std::uint64_t seed, int size = 32) : model(ModelConfig::tiny()) {
    Rng rng(seed);
    model.init(rng);
    model.visit([&](const std::string&, Tensord& p) {
      for (auto& v : p.data()) v += 0.05 * rng.normal();
    });
    image = random_tensor({3, static_cast<std::size_t>(size), static_cast<std::size_t>(size)}, rng, 1.0, false);
    edges = Tensord(Shape{1, static_cast<std::size_t>(size), static_cast<std::size_t>(size)});
    for (auto& v : edges.data()) v = rng.coin(0.25) ? 1.0 : 0.0;
    gt = MaskPair::from_text(block_mask(rng, size, size));
  }

  Tensord loss() const {
    const auto out = model.forward(image, edges);
    const AreaMask<double>* area = out.area ? &*out.area : nullptr;
    return joint_loss(out.logits, area, gt, 1.0).total;
  }
};

}  // namespace edgeseg::testing
