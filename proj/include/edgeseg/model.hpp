#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "edgeseg/config.hpp"
#include "edgeseg/decoder.hpp"
#include "edgeseg/edge_extractor.hpp"
#include "edgeseg/encoder.hpp"

namespace edgeseg {

template <typename Scalar>
struct ModelOutputs {
  Tensor<Scalar> logits;                // [2 x H x W]
  std::optional<AreaMask<Scalar>> area;  // present iff edge filtering is on
  Tensor<Scalar> soft_edges;            // soft_argmax(E_w); undefined for the baseline
  Tensor<Scalar> edges;                 // map handed to the encoder (E_t or unfiltered)
  EncoderOutputs<Scalar> encoder;
};

/// Edge-aware segmenter. The two switches select the ablation variant:
///   filtering && guidance  full model, E_t feeds cross-attention
///   filtering only         E_t concatenated to the image as a 4th channel
///   guidance only          unfiltered soft edges feed cross-attention
///   neither                plain hierarchical encoder + decoder
template <typename Scalar>
class EdgeSegModel {
 public:
  explicit EdgeSegModel(const ModelConfig& cfg);

  /// image [3 x H x W] normalised, raw_edges [1 x H x W] binary Canny map.
  ModelOutputs<Scalar> forward(const Tensor<Scalar>& image, const Tensor<Scalar>& raw_edges) const;
  /// Canny on the image, then forward.
  ModelOutputs<Scalar> forward(const ImageU8& image) const;

  void init(Rng& rng);
  void visit(const ParamVisitor<Scalar>& f);
  std::vector<std::pair<std::string, Tensor<Scalar>>> parameters();
  std::size_t parameter_count();

  const ModelConfig& config() const { return cfg_; }
  bool has_detector() const { return cfg_.edge_filtering; }

 private:
  ModelConfig cfg_;
  TextEdgeExtractor<Scalar> extractor_;
  EdgeGuidedEncoder<Scalar> encoder_;
  MlpDecoder<Scalar> decoder_;
};

/// RGB (gray is replicated) to [3 x H x W] with (v / 255 - 0.5) / 0.5.
template <typename Scalar>
Tensor<Scalar> image_tensor(const ImageU8& image);

/// Binary Canny map with the model's thresholds.
EdgeMap raw_edges(const ImageU8& image, const ModelConfig& cfg);

/// Per-pixel argmax of [2 x H x W] logits; ties go to background.
template <typename Scalar>
Mask predict_mask(const Tensor<Scalar>& logits);

extern template class EdgeSegModel<float>;
extern template class EdgeSegModel<double>;

}  // namespace edgeseg
