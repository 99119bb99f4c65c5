#pragma once

#include <array>
#include <cstddef>

#include "edgeseg/layers.hpp"

namespace edgeseg {

/// All-MLP decoder. Each stage is mapped to C1 channels, resized to the
/// stage-1 grid, concatenated, fused back to C1 and classified into two
/// logits, which are finally resized to the input resolution.
template <typename Scalar>
struct MlpDecoder {
  std::array<Linear<Scalar>, 4> project;
  Linear<Scalar> fuse;
  Linear<Scalar> classify;

  MlpDecoder() = default;
  explicit MlpDecoder(const std::array<std::size_t, 4>& channels);

  /// Returns logits [2 x out_h x out_w]; class 1 is text.
  Tensor<Scalar> operator()(const std::array<Tensor<Scalar>, 4>& stages, std::size_t out_h,
                            std::size_t out_w) const;
  void init(Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f);
};

extern template struct MlpDecoder<float>;
extern template struct MlpDecoder<double>;

}  // namespace edgeseg
