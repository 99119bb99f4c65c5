#include "edgeseg/model.hpp"

#include "edgeseg/canny.hpp"
#include "edgeseg/errors.hpp"

namespace edgeseg {

template <typename Scalar>
EdgeSegModel<Scalar>::EdgeSegModel(const ModelConfig& cfg)
    : cfg_(cfg),
      encoder_(cfg, cfg.edge_filtering && !cfg.edge_guidance ? 4 : 3, cfg.edge_guidance),
      decoder_({cfg.stages[0].channels, cfg.stages[1].channels, cfg.stages[2].channels, cfg.stages[3].channels}) {
  if (cfg_.edge_filtering) {
    extractor_ = TextEdgeExtractor<Scalar>(cfg_.detector_channels, static_cast<Scalar>(cfg_.softargmax_temperature));
  }
}

template <typename Scalar>
ModelOutputs<Scalar> EdgeSegModel<Scalar>::forward(const Tensor<Scalar>& image,
                                                   const Tensor<Scalar>& raw) const {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("model expects a [3 x H x W] image, got " + to_string(image.shape()));
  const bool needs_edges = cfg_.edge_filtering || cfg_.edge_guidance;
  if (needs_edges && (!raw.defined() || raw.rank() != 3 || raw.dim(0) != 1 || raw.dim(1) != image.dim(1) ||
                      raw.dim(2) != image.dim(2))) {
    throw ShapeError("raw edge map must be [1 x H x W] matching the image");
  }
  ModelOutputs<Scalar> out;
  Tensor<Scalar> encoder_input = image;
  if (cfg_.edge_filtering) {
    auto extracted = extractor_(image, raw);
    out.area = extracted.area;
    out.soft_edges = extracted.soft_edges;
    out.edges = extracted.filtered_edges;
    if (!cfg_.edge_guidance) encoder_input = concat(std::vector<Tensor<Scalar>>{image, out.edges}, 0);
  } else if (cfg_.edge_guidance) {
    out.soft_edges = soft_argmax(raw, static_cast<Scalar>(cfg_.softargmax_temperature));
    out.edges = out.soft_edges;
  }
  out.encoder = encoder_(encoder_input, cfg_.edge_guidance ? out.edges : Tensor<Scalar>());
  out.logits = decoder_(out.encoder.stages, image.dim(1), image.dim(2));
  return out;
}

template <typename Scalar>
ModelOutputs<Scalar> EdgeSegModel<Scalar>::forward(const ImageU8& image) const {
  return forward(image_tensor<Scalar>(image), edge_tensor<Scalar>(raw_edges(image, cfg_)));
}

template <typename Scalar>
void EdgeSegModel<Scalar>::init(Rng& rng) {
  if (cfg_.edge_filtering) extractor_.init(rng);
  encoder_.init(rng);
  decoder_.init(rng);
}

template <typename Scalar>
void EdgeSegModel<Scalar>::visit(const ParamVisitor<Scalar>& f) {
  if (cfg_.edge_filtering) extractor_.visit("extractor", f);
  encoder_.visit("encoder", f);
  decoder_.visit("decoder", f);
}

template <typename Scalar>
std::vector<std::pair<std::string, Tensor<Scalar>>> EdgeSegModel<Scalar>::parameters() {
  std::vector<std::pair<std::string, Tensor<Scalar>>> out;
  visit([&](const std::string& name, Tensor<Scalar>& p) { out.emplace_back(name, p); });
  return out;
}

template <typename Scalar>
std::size_t EdgeSegModel<Scalar>::parameter_count() {
  std::size_t n = 0;
  visit([&](const std::string&, Tensor<Scalar>& p) { n += p.size(); });
  return n;
}

template <typename Scalar>
Tensor<Scalar> image_tensor(const ImageU8& image) {
  const std::size_t h = image.height, w = image.width, plane = h * w;
  std::vector<Scalar> values(3 * plane);
  for (std::size_t c = 0; c < 3; ++c) {
    const int src_c = image.channels == 3 ? static_cast<int>(c) : 0;
    for (std::size_t i = 0; i < plane; ++i) {
      const Scalar v = static_cast<Scalar>(image.data[i * image.channels + src_c]) / Scalar(255);
      values[c * plane + i] = (v - Scalar(0.5)) / Scalar(0.5);
    }
  }
  return Tensor<Scalar>(Shape{3, h, w}, std::move(values));
}

EdgeMap raw_edges(const ImageU8& image, const ModelConfig& cfg) {
  return canny(image, cfg.canny_low, cfg.canny_high);
}

template <typename Scalar>
Mask predict_mask(const Tensor<Scalar>& logits) {
  if (logits.rank() != 3 || logits.dim(0) != 2) throw ShapeError("expected [2 x H x W] logits, got " + to_string(logits.shape()));
  const std::size_t plane = logits.dim(1) * logits.dim(2);
  Mask out(static_cast<int>(logits.dim(1)), static_cast<int>(logits.dim(2)));
  const auto d = logits.data();
  for (std::size_t i = 0; i < plane; ++i) out.data[i] = d[plane + i] > d[i] ? 1 : 0;
  return out;
}

template class EdgeSegModel<float>;
template class EdgeSegModel<double>;
template Tensor<float> image_tensor<float>(const ImageU8&);
template Tensor<double> image_tensor<double>(const ImageU8&);
template Mask predict_mask(const Tensor<float>&);
template Mask predict_mask(const Tensor<double>&);

}  // namespace edgeseg
