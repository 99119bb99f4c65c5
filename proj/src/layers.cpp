#include "edgeseg/layers.hpp"

#include <cmath>

namespace edgeseg {

template <typename Scalar>
Linear<Scalar>::Linear(std::size_t in, std::size_t out)
    : weight(Shape{in, out}), bias(Shape{out}) {
  weight.set_requires_grad(true);
  bias.set_requires_grad(true);
}

template <typename Scalar>
void Linear<Scalar>::init(Rng& rng) {
  for (auto& w : weight.data()) w = static_cast<Scalar>(0.02 * rng.truncated_normal());
  for (auto& b : bias.data()) b = Scalar(0);
}

template <typename Scalar>
void Linear<Scalar>::zero() {
  for (auto& w : weight.data()) w = Scalar(0);
  for (auto& b : bias.data()) b = Scalar(0);
}

template <typename Scalar>
void Linear<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
  f(prefix + ".weight", weight);
  f(prefix + ".bias", bias);
}

template <typename Scalar>
Conv2d<Scalar>::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_,
                       std::size_t pad_)
    : weight(Shape{out, in, kernel, kernel}), bias(Shape{out}), stride(stride_), pad(pad_) {
  weight.set_requires_grad(true);
  bias.set_requires_grad(true);
}

template <typename Scalar>
void Conv2d<Scalar>::init(Rng& rng) {
  const double fan_out = static_cast<double>(weight.dim(0) * weight.dim(2) * weight.dim(3));
  const double std = std::sqrt(2.0 / fan_out);
  for (auto& w : weight.data()) w = static_cast<Scalar>(std * rng.normal());
  for (auto& b : bias.data()) b = Scalar(0);
}

template <typename Scalar>
void Conv2d<Scalar>::init_head(Rng& rng) {
  for (auto& w : weight.data()) w = static_cast<Scalar>(0.02 * rng.truncated_normal());
  for (auto& b : bias.data()) b = Scalar(0);
}

template <typename Scalar>
void Conv2d<Scalar>::zero() {
  for (auto& w : weight.data()) w = Scalar(0);
  for (auto& b : bias.data()) b = Scalar(0);
}

template <typename Scalar>
void Conv2d<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
  f(prefix + ".weight", weight);
  f(prefix + ".bias", bias);
}

template <typename Scalar>
LayerNorm<Scalar>::LayerNorm(std::size_t channels)
    : gamma(Shape{channels}, Scalar(1)), beta(Shape{channels}) {
  gamma.set_requires_grad(true);
  beta.set_requires_grad(true);
}

template <typename Scalar>
void LayerNorm<Scalar>::init() {
  for (auto& g : gamma.data()) g = Scalar(1);
  for (auto& b : beta.data()) b = Scalar(0);
}

template <typename Scalar>
void LayerNorm<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
  f(prefix + ".gamma", gamma);
  f(prefix + ".beta", beta);
}

template struct Linear<float>;
template struct Linear<double>;
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;

}  // namespace edgeseg
