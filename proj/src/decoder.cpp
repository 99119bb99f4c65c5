#include "edgeseg/decoder.hpp"

#include "edgeseg/errors.hpp"

namespace edgeseg {

template <typename Scalar>
MlpDecoder<Scalar>::MlpDecoder(const std::array<std::size_t, 4>& channels)
    : fuse(4 * channels[0], channels[0]), classify(channels[0], 2) {
  for (std::size_t i = 0; i < 4; ++i) project[i] = Linear<Scalar>(channels[i], channels[0]);
}

template <typename Scalar>
Tensor<Scalar> MlpDecoder<Scalar>::operator()(const std::array<Tensor<Scalar>, 4>& stages, std::size_t out_h,
                                              std::size_t out_w) const {
  for (std::size_t i = 0; i < 4; ++i) {
    if (!stages[i].defined() || stages[i].rank() != 3) {
      throw ShapeError("decoder: stage " + std::to_string(i + 1) + " output missing or not [C x H x W]");
    }
  }
  const std::size_t h1 = stages[0].dim(1), w1 = stages[0].dim(2);
  std::vector<Tensor<Scalar>> parts;
  parts.reserve(4);
  for (std::size_t i = 0; i < 4; ++i) {
    Tensor<Scalar> mapped = to_map(project[i](to_tokens(stages[i])), stages[i].dim(1), stages[i].dim(2));
    if (i > 0) mapped = bilinear_resize(mapped, h1, w1);
    parts.push_back(mapped);
  }
  Tensor<Scalar> fused = gelu(fuse(to_tokens(concat(parts, 0))));
  Tensor<Scalar> logits = to_map(classify(fused), h1, w1);
  return bilinear_resize(logits, out_h, out_w);
}

template <typename Scalar>
void MlpDecoder<Scalar>::init(Rng& rng) {
  for (auto& p : project) p.init(rng);
  fuse.init(rng);
  classify.init(rng);
}

template <typename Scalar>
void MlpDecoder<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
  for (std::size_t i = 0; i < 4; ++i) project[i].visit(prefix + ".project" + std::to_string(i + 1), f);
  fuse.visit(prefix + ".fuse", f);
  classify.visit(prefix + ".classify", f);
}

template struct MlpDecoder<float>;
template struct MlpDecoder<double>;

}  // namespace edgeseg
