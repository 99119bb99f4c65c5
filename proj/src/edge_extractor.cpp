#include "edgeseg/edge_extractor.hpp"

#include <algorithm>
#include <cmath>

#include "edgeseg/errors.hpp"

namespace edgeseg {

template <typename Scalar>
ResidualBlock<Scalar>::ResidualBlock(std::size_t in, std::size_t out, std::size_t stride)
    : conv1(in, out, 3, stride, 1), conv2(out, out, 3, 1, 1), has_shortcut(in != out || stride != 1) {
  if (has_shortcut) shortcut = Conv2d<Scalar>(in, out, 1, stride, 0);
}

template <typename Scalar>
Tensor<Scalar> ResidualBlock<Scalar>::operator()(const Tensor<Scalar>& x) const {
  Tensor<Scalar> h = conv2(relu(conv1(relu(x))));
  return add(has_shortcut ? shortcut(x) : x, h);
}

template <typename Scalar>
void ResidualBlock<Scalar>::init(Rng& rng) {
  conv1.init(rng);
  conv2.init(rng);
  if (has_shortcut) shortcut.init(rng);
}

template <typename Scalar>
void ResidualBlock<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
  conv1.visit(prefix + ".conv1", f);
  conv2.visit(prefix + ".conv2", f);
  if (has_shortcut) shortcut.visit(prefix + ".shortcut", f);
}

template <typename Scalar>
DetectorBackbone<Scalar>::DetectorBackbone(std::size_t in_channels, const std::array<std::size_t, 4>& channels)
    : stem(in_channels, channels[0], 7, 2, 3) {
  std::size_t width = channels[0];
  for (std::size_t i = 0; i < 4; ++i) {
    stages[i][0] = ResidualBlock<Scalar>(width, channels[i], i == 0 ? 1 : 2);
    stages[i][1] = ResidualBlock<Scalar>(channels[i], channels[i], 1);
    width = channels[i];
  }
}

template <typename Scalar>
DetectorFeatures<Scalar> DetectorBackbone<Scalar>::operator()(const Tensor<Scalar>& x) const {
  if (x.rank() != 3 || x.dim(1) % 32 != 0 || x.dim(2) % 32 != 0) {
    throw ShapeError("detector backbone needs [C x H x W] with H, W divisible by 32, got " + to_string(x.shape()));
  }
  DetectorFeatures<Scalar> out;
  Tensor<Scalar> h = max_pool2d(stem(x), 3, 2, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    h = stages[i][1](stages[i][0](h));
    out.stages[i] = h;
  }
  return out;
}

template <typename Scalar>
void DetectorBackbone<Scalar>::init(Rng& rng) {
  stem.init(rng);
  for (auto& stage : stages) {
    for (auto& block : stage) block.init(rng);
  }
}

template <typename Scalar>
void DetectorBackbone<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
  stem.visit(prefix + ".stem", f);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t b = 0; b < 2; ++b) {
      stages[i][b].visit(prefix + ".stage" + std::to_string(i + 1) + ".block" + std::to_string(b), f);
    }
  }
}

template <typename Scalar>
DetectionHead<Scalar>::DetectionHead(const std::array<std::size_t, 4>& channels)
    : classify(channels[0] + channels[1] + channels[2] + channels[3], 2, 1, 1, 0) {}

template <typename Scalar>
AreaMask<Scalar> DetectionHead<Scalar>::operator()(const DetectorFeatures<Scalar>& feats) const {
  const std::size_t h = feats.stages[0].dim(1), w = feats.stages[0].dim(2);
  std::vector<Tensor<Scalar>> parts{feats.stages[0]};
  for (std::size_t i = 1; i < 4; ++i) parts.push_back(bilinear_resize(feats.stages[i], h, w));
  AreaMask<Scalar> out;
  out.logits = classify(concat(parts, 0));
  out.probs = softmax(out.logits, 0);
  return out;
}

template <typename Scalar>
void DetectionHead<Scalar>::init(Rng& rng) {
  classify.init_head(rng);
}

template <typename Scalar>
void DetectionHead<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
  classify.visit(prefix + ".classify", f);
}

template <typename Scalar>
Tensor<Scalar> soft_argmax(const Tensor<Scalar>& edges, Scalar temperature) {
  if (!(temperature > Scalar(0))) throw ConfigError("soft_argmax temperature must be > 0");
  const Scalar inv_t = Scalar(1) / temperature;
  Tensor<Scalar> edge_logit = scale(edges, inv_t);
  Tensor<Scalar> background_logit = scale(add_scalar(scale(edges, Scalar(-1)), Scalar(1)), inv_t);
  const std::size_t axis = 0;
  Tensor<Scalar> probs = softmax(concat<Scalar>({edge_logit, background_logit}, axis), axis);
  return slice(probs, axis, 0, edges.dim(0));
}

EdgeMap soft_argmax(const EdgeMap& edges, double temperature) {
  NoGradGuard guard;
  return to_edge_map(soft_argmax(edge_tensor<double>(edges), temperature));
}

template <typename Scalar>
Tensor<Scalar> filter_edges(const Tensor<Scalar>& soft_edges, const AreaMask<Scalar>& area) {
  if (soft_edges.rank() != 3 || soft_edges.dim(0) != 1) {
    throw ShapeError("filter_edges expects a [1 x H x W] edge map, got " + to_string(soft_edges.shape()));
  }
  Tensor<Scalar> fg = bilinear_resize(area.foreground(), soft_edges.dim(1), soft_edges.dim(2));
  return mul(fg, soft_edges);
}

EdgeMap filter_edges(const EdgeMap& soft_edges, const EdgeMap& foreground) {
  NoGradGuard guard;
  Tensor<double> fg = bilinear_resize(edge_tensor<double>(foreground), static_cast<std::size_t>(soft_edges.height),
                                      static_cast<std::size_t>(soft_edges.width));
  return to_edge_map(mul(fg, edge_tensor<double>(soft_edges)));
}

template <typename Scalar>
TextEdgeExtractor<Scalar>::TextEdgeExtractor(const std::array<std::size_t, 4>& channels, Scalar temperature_)
    : backbone(3, channels), head(channels), temperature(temperature_) {}

template <typename Scalar>
typename TextEdgeExtractor<Scalar>::Output TextEdgeExtractor<Scalar>::operator()(
    const Tensor<Scalar>& image, const Tensor<Scalar>& raw_edges) const {
  Output out;
  out.area = head(backbone(image));
  out.soft_edges = soft_argmax(raw_edges, temperature);
  out.filtered_edges = filter_edges(out.soft_edges, out.area);
  return out;
}

template <typename Scalar>
void TextEdgeExtractor<Scalar>::init(Rng& rng) {
  backbone.init(rng);
  head.init(rng);
}

template <typename Scalar>
void TextEdgeExtractor<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
  backbone.visit(prefix + ".backbone", f);
  head.visit(prefix + ".head", f);
}

template <typename Scalar>
Tensor<Scalar> edge_tensor(const EdgeMap& map) {
  std::vector<Scalar> values(map.values.begin(), map.values.end());
  return Tensor<Scalar>(Shape{1, static_cast<std::size_t>(map.height), static_cast<std::size_t>(map.width)},
                        std::move(values));
}

template <typename Scalar>
EdgeMap to_edge_map(const Tensor<Scalar>& t) {
  const bool ok = (t.rank() == 3 && t.dim(0) == 1) || t.rank() == 2;
  if (!ok) throw ShapeError("edge map tensor must be [1 x H x W] or [H x W], got " + to_string(t.shape()));
  const std::size_t h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  EdgeMap out(static_cast<int>(h), static_cast<int>(w));
  std::transform(t.data().begin(), t.data().end(), out.values.begin(),
                 [](Scalar v) { return static_cast<float>(std::clamp(v, Scalar(0), Scalar(1))); });
  return out;
}

#define EDGESEG_INSTANTIATE(S)                                                      \
  template struct ResidualBlock<S>;                                                 \
  template struct DetectorBackbone<S>;                                              \
  template struct DetectionHead<S>;                                                 \
  template struct TextEdgeExtractor<S>;                                             \
  template Tensor<S> soft_argmax(const Tensor<S>&, S);                              \
  template Tensor<S> filter_edges(const Tensor<S>&, const AreaMask<S>&);            \
  template Tensor<S> edge_tensor<S>(const EdgeMap&);                                \
  template EdgeMap to_edge_map(const Tensor<S>&);

EDGESEG_INSTANTIATE(float)
EDGESEG_INSTANTIATE(double)

#undef EDGESEG_INSTANTIATE

}  // namespace edgeseg
