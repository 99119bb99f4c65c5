#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "edgeseg/config.hpp"
#include "edgeseg/layers.hpp"

namespace edgeseg {

/// Tokens [H*W x C] with the grid they tile.
template <typename Scalar>
struct TokenGrid {
  Tensor<Scalar> tokens;
  std::size_t height = 0;
  std::size_t width = 0;

  Tensor<Scalar> map() const { return to_map(tokens, height, width); }
};

/// Multi-head scaled dot-product attention on already-projected inputs:
/// softmax(Q K^T / sqrt(d_head)) V per head, heads concatenated.
/// q is [Nq x C], k and v are [Nk x C]. If `probs` is non-null the
/// per-head attention matrices [Nq x Nk] are appended to it.
template <typename Scalar>
Tensor<Scalar> multi_head_attention(const Tensor<Scalar>& q, const Tensor<Scalar>& k, const Tensor<Scalar>& v,
                                    std::size_t heads, std::vector<Tensor<Scalar>>* probs = nullptr);

/// Strided convolution followed by layer normalisation over channels.
template <typename Scalar>
struct OverlapPatchEmbed {
  Conv2d<Scalar> proj;
  LayerNorm<Scalar> norm;

  OverlapPatchEmbed() = default;
  OverlapPatchEmbed(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t pad);

  TokenGrid<Scalar> operator()(const Tensor<Scalar>& x) const;
  void init(Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f);
};

/// Self-attention whose keys/values come from an R x R strided merge of the
/// token grid (plus layer norm) when R > 1.
template <typename Scalar>
struct EfficientSelfAttention {
  Linear<Scalar> query, key, value, out;
  Conv2d<Scalar> reduce;
  LayerNorm<Scalar> reduce_norm;
  std::size_t heads = 1;
  std::size_t reduction = 1;

  EfficientSelfAttention() = default;
  EfficientSelfAttention(std::size_t channels, std::size_t heads, std::size_t reduction);

  TokenGrid<Scalar> operator()(const TokenGrid<Scalar>& x, std::vector<Tensor<Scalar>>* probs = nullptr) const;
  void init(Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f);
};

/// Two-layer MLP with GELU.
template <typename Scalar>
struct FeedForward {
  Linear<Scalar> fc1, fc2;

  FeedForward() = default;
  FeedForward(std::size_t channels, std::size_t hidden);

  Tensor<Scalar> operator()(const Tensor<Scalar>& tokens) const { return fc2(gelu(fc1(tokens))); }
  void init(Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f);
};

/// Pre-norm transformer block: x + SA(LN(x)), then x + FFN(LN(x)).
template <typename Scalar>
struct EncoderBlock {
  LayerNorm<Scalar> norm1;
  EfficientSelfAttention<Scalar> attn;
  LayerNorm<Scalar> norm2;
  FeedForward<Scalar> ffn;

  EncoderBlock() = default;
  EncoderBlock(const StageConfig& cfg, std::size_t mlp_ratio);

  TokenGrid<Scalar> operator()(const TokenGrid<Scalar>& x) const;
  void init(Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f);
};

/// Edge guidance. The edge map is patch-embedded to the stage's token grid,
/// then two attention passes run with R = 1:
///   edge-visual  = SA(Q = edges,    K = V = features)
///   text-edge    = SA(Q = features, K = V = edges)
/// and the result is edge-visual + text-edge + features.
template <typename Scalar>
struct SymmetricCrossAttention {
  OverlapPatchEmbed<Scalar> edge_embed;
  Linear<Scalar> ev_query, ev_key, ev_value, ev_out;
  Linear<Scalar> te_query, te_key, te_value, te_out;
  std::size_t heads = 1;

  SymmetricCrossAttention() = default;
  /// Edge embedding geometry must map the input resolution onto the
  /// stage's token grid.
  SymmetricCrossAttention(std::size_t channels, std::size_t heads, std::size_t kernel, std::size_t stride,
                          std::size_t pad);

  /// edges is [1 x H x W] at input resolution.
  TokenGrid<Scalar> operator()(const TokenGrid<Scalar>& features, const Tensor<Scalar>& edges,
                               std::vector<Tensor<Scalar>>* probs = nullptr) const;
  /// Output projections start at zero so the fusion begins as the identity.
  void init(Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f);
};

template <typename Scalar>
struct EncoderStage {
  OverlapPatchEmbed<Scalar> embed;
  std::vector<EncoderBlock<Scalar>> blocks;
  LayerNorm<Scalar> norm;

  EncoderStage() = default;
  EncoderStage(std::size_t in_channels, const StageConfig& cfg, std::size_t mlp_ratio);

  TokenGrid<Scalar> operator()(const Tensor<Scalar>& x) const;
  void init(Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f);
};

/// Per-stage outputs [C_i x H_i x W_i]; stages[fusion_stage - 1] holds the
/// fused map when guidance is on, `pre_fusion` the map before fusion.
template <typename Scalar>
struct EncoderOutputs {
  std::array<Tensor<Scalar>, 4> stages;
  Tensor<Scalar> pre_fusion;
};

template <typename Scalar>
struct EdgeGuidedEncoder {
  std::array<EncoderStage<Scalar>, 4> stages;
  SymmetricCrossAttention<Scalar> fusion;
  bool guidance = false;
  std::size_t fusion_stage = 1;

  EdgeGuidedEncoder() = default;
  /// `in_channels` is 3 for images, 4 when an edge map is concatenated.
  EdgeGuidedEncoder(const ModelConfig& cfg, std::size_t in_channels, bool guidance);

  /// x is [C x H x W]; `edges` ([1 x H x W]) is required iff guidance is on.
  EncoderOutputs<Scalar> operator()(const Tensor<Scalar>& x, const Tensor<Scalar>& edges) const;
  void init(Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f);
};

}  // namespace edgeseg
