#pragma once

#include <array>
#include <cstddef>

#include "edgeseg/image.hpp"
#include "edgeseg/layers.hpp"

namespace edgeseg {

/// Detector backbone outputs at strides 4, 8, 16, 32.
template <typename Scalar>
struct DetectorFeatures {
  std::array<Tensor<Scalar>, 4> stages;
};

/// Text-area probability field at detector resolution (stride 4).
template <typename Scalar>
struct AreaMask {
  Tensor<Scalar> logits;  // [2 x He x We]
  Tensor<Scalar> probs;   // softmax over the channel axis

  /// Channel 1 (text) as [1 x He x We].
  Tensor<Scalar> foreground() const { return slice(probs, 0, 1, 1); }
};

/// Pre-activation residual block: x + conv(relu(conv(relu(x)))), with a
/// 1x1 projection on the shortcut when stride or width changes.
template <typename Scalar>
struct ResidualBlock {
  Conv2d<Scalar> conv1;
  Conv2d<Scalar> conv2;
  Conv2d<Scalar> shortcut;
  bool has_shortcut = false;

  ResidualBlock() = default;
  ResidualBlock(std::size_t in, std::size_t out, std::size_t stride);

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const;
  void init(Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f);
};

/// Small ResNet-like detector backbone: 7x7/2 stem conv, 3x3/2 max-pool,
/// then four stages of two residual blocks.
template <typename Scalar>
struct DetectorBackbone {
  Conv2d<Scalar> stem;
  std::array<std::array<ResidualBlock<Scalar>, 2>, 4> stages;

  DetectorBackbone() = default;
  DetectorBackbone(std::size_t in_channels, const std::array<std::size_t, 4>& channels);

  /// x is [C x H x W] with H, W divisible by 32.
  DetectorFeatures<Scalar> operator()(const Tensor<Scalar>& x) const;
  void init(Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f);
};

/// Upsamples stages 2-4 to stage-1 resolution, concatenates channels and
/// applies a 1x1 convolution to two logits followed by a per-pixel softmax.
template <typename Scalar>
struct DetectionHead {
  Conv2d<Scalar> classify;

  DetectionHead() = default;
  explicit DetectionHead(const std::array<std::size_t, 4>& channels);

  AreaMask<Scalar> operator()(const DetectorFeatures<Scalar>& feats) const;
  void init(Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f);
};

/// Two-logit relaxation of an edge map: edge logit v / T against non-edge
/// logit (1 - v) / T, softmax, edge probability returned. Input [1 x H x W].
template <typename Scalar>
Tensor<Scalar> soft_argmax(const Tensor<Scalar>& edges, Scalar temperature);
EdgeMap soft_argmax(const EdgeMap& edges, double temperature);

/// Pointwise product of the soft edge map and the text-area foreground,
/// which is bilinearly resized to the edge resolution first.
template <typename Scalar>
Tensor<Scalar> filter_edges(const Tensor<Scalar>& soft_edges, const AreaMask<Scalar>& area);
EdgeMap filter_edges(const EdgeMap& soft_edges, const EdgeMap& foreground);

/// Edge extraction branch: detector + soft edge filtering.
template <typename Scalar>
struct TextEdgeExtractor {
  DetectorBackbone<Scalar> backbone;
  DetectionHead<Scalar> head;
  Scalar temperature = Scalar(1);

  struct Output {
    AreaMask<Scalar> area;
    Tensor<Scalar> soft_edges;      // soft_argmax(E_w), [1 x H x W]
    Tensor<Scalar> filtered_edges;  // E_t, [1 x H x W]
  };

  TextEdgeExtractor() = default;
  TextEdgeExtractor(const std::array<std::size_t, 4>& channels, Scalar temperature);

  Output operator()(const Tensor<Scalar>& image, const Tensor<Scalar>& raw_edges) const;
  void init(Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f);
};

template <typename Scalar>
Tensor<Scalar> edge_tensor(const EdgeMap& map);
/// [1 x H x W] (or [H x W]) tensor to an EdgeMap.
template <typename Scalar>
EdgeMap to_edge_map(const Tensor<Scalar>& t);

}  // namespace edgeseg
