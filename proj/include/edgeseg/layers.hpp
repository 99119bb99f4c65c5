#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "edgeseg/ops.hpp"
#include "edgeseg/rng.hpp"
#include "edgeseg/tensor.hpp"

namespace edgeseg {

template <typename Scalar>
using ParamVisitor = std::function<void(const std::string& name, Tensor<Scalar>& param)>;

/// Token-wise affine layer: [N x in] -> [N x out].
template <typename Scalar>
struct Linear {
  Tensor<Scalar> weight;  // [in x out]
  Tensor<Scalar> bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out);

  Tensor<Scalar> operator()(const Tensor<Scalar>& tokens) const { return linear(tokens, weight, bias); }
  /// Truncated normal, std 0.02; zero bias.
  void init(Rng& rng);
  void zero();
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f);
};

template <typename Scalar>
struct Conv2d {
  Tensor<Scalar> weight;  // [out x in x k x k]
  Tensor<Scalar> bias;    // [out]
  std::size_t stride = 1;
  std::size_t pad = 0;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t pad);

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return conv2d(x, weight, bias, stride, pad); }
  /// He-normal over fan-out; zero bias.
  void init(Rng& rng);
  /// Truncated normal, std 0.02, as for Linear. Used for 1x1 prediction heads.
  void init_head(Rng& rng);
  void zero();
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f);
};

/// Normalises each token over channels.
template <typename Scalar>
struct LayerNorm {
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t channels);

  Tensor<Scalar> operator()(const Tensor<Scalar>& tokens) const { return layer_norm(tokens, gamma, beta); }
  void init();
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f);
};

extern template struct Linear<float>;
extern template struct Linear<double>;
extern template struct Conv2d<float>;
extern template struct Conv2d<double>;
extern template struct LayerNorm<float>;
extern template struct LayerNorm<double>;

}  // namespace edgeseg
