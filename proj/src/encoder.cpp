#include "edgeseg/encoder.hpp"

#include <cmath>

#include "edgeseg/errors.hpp"

namespace edgeseg {

template <typename Scalar>
Tensor<Scalar> multi_head_attention(const Tensor<Scalar>& q, const Tensor<Scalar>& k, const Tensor<Scalar>& v,
                                    std::size_t heads, std::vector<Tensor<Scalar>>* probs) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.shape() != v.shape()) {
    throw ShapeError("attention: incompatible q/k/v " + to_string(q.shape()) + " " + to_string(k.shape()) + " " +
                     to_string(v.shape()));
  }
  const std::size_t channels = q.dim(1);
  if (heads == 0 || channels % heads != 0) {
    throw ConfigError("attention: " + std::to_string(channels) + " channels not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const std::size_t d = channels / heads;
  const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(static_cast<Scalar>(d));
  std::vector<Tensor<Scalar>> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor<Scalar> qh = heads == 1 ? q : slice(q, 1, h * d, d);
    const Tensor<Scalar> kh = heads == 1 ? k : slice(k, 1, h * d, d);
    const Tensor<Scalar> vh = heads == 1 ? v : slice(v, 1, h * d, d);
    Tensor<Scalar> p = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt_d), 1);
    if (probs) probs->push_back(p);
    outs.push_back(matmul(p, vh));
  }
  return heads == 1 ? outs.front() : concat(outs, 1);
}

template <typename Scalar>
OverlapPatchEmbed<Scalar>::OverlapPatchEmbed(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                                             std::size_t pad)
    : proj(in, out, kernel, stride, pad), norm(out) {}

template <typename Scalar>
TokenGrid<Scalar> OverlapPatchEmbed<Scalar>::operator()(const Tensor<Scalar>& x) const {
  Tensor<Scalar> y = proj(x);
  return {norm(to_tokens(y)), y.dim(1), y.dim(2)};
}

template <typename Scalar>
void OverlapPatchEmbed<Scalar>::init(Rng& rng) {
  proj.init(rng);
  norm.init();
}

template <typename Scalar>
void OverlapPatchEmbed<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
  proj.visit(prefix + ".proj", f);
  norm.visit(prefix + ".norm", f);
}

template <typename Scalar>
EfficientSelfAttention<Scalar>::EfficientSelfAttention(std::size_t channels, std::size_t heads_,
                                                       std::size_t reduction_)
    : query(channels, channels),
      key(channels, channels),
      value(channels, channels),
      out(channels, channels),
      heads(heads_),
      reduction(reduction_) {
  if (reduction > 1) {
    reduce = Conv2d<Scalar>(channels, channels, reduction, reduction, 0);
    reduce_norm = LayerNorm<Scalar>(channels);
  }
}

template <typename Scalar>
TokenGrid<Scalar> EfficientSelfAttention<Scalar>::operator()(const TokenGrid<Scalar>& x,
                                                             std::vector<Tensor<Scalar>>* probs) const {
  Tensor<Scalar> context = x.tokens;
  if (reduction > 1) {
    if (x.height % reduction != 0 || x.width % reduction != 0) {
      throw ConfigError("reduction ratio " + std::to_string(reduction) + " does not divide the " +
                        std::to_string(x.height) + "x" + std::to_string(x.width) + " token grid");
    }
    context = reduce_norm(to_tokens(reduce(x.map())));
  }
  Tensor<Scalar> attended = multi_head_attention(query(x.tokens), key(context), value(context), heads, probs);
  return {out(attended), x.height, x.width};
}

template <typename Scalar>
void EfficientSelfAttention<Scalar>::init(Rng& rng) {
  query.init(rng);
  key.init(rng);
  value.init(rng);
  out.init(rng);
  if (reduction > 1) {
    reduce.init(rng);
    reduce_norm.init();
  }
}

template <typename Scalar>
void EfficientSelfAttention<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
  query.visit(prefix + ".query", f);
  key.visit(prefix + ".key", f);
  value.visit(prefix + ".value", f);
  out.visit(prefix + ".out", f);
  if (reduction > 1) {
    reduce.visit(prefix + ".reduce", f);
    reduce_norm.visit(prefix + ".reduce_norm", f);
  }
}

template <typename Scalar>
FeedForward<Scalar>::FeedForward(std::size_t channels, std::size_t hidden)
    : fc1(channels, hidden), fc2(hidden, channels) {}

template <typename Scalar>
void FeedForward<Scalar>::init(Rng& rng) {
  fc1.init(rng);
  fc2.init(rng);
}

template <typename Scalar>
void FeedForward<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
  fc1.visit(prefix + ".fc1", f);
  fc2.visit(prefix + ".fc2", f);
}

template <typename Scalar>
EncoderBlock<Scalar>::EncoderBlock(const StageConfig& cfg, std::size_t mlp_ratio)
    : norm1(cfg.channels),
      attn(cfg.channels, cfg.heads, cfg.reduction),
      norm2(cfg.channels),
      ffn(cfg.channels, cfg.channels * mlp_ratio) {}

template <typename Scalar>
TokenGrid<Scalar> EncoderBlock<Scalar>::operator()(const TokenGrid<Scalar>& x) const {
  Tensor<Scalar> h = add(x.tokens, attn({norm1(x.tokens), x.height, x.width}).tokens);
  h = add(h, ffn(norm2(h)));
  return {h, x.height, x.width};
}

template <typename Scalar>
void EncoderBlock<Scalar>::init(Rng& rng) {
  norm1.init();
  attn.init(rng);
  norm2.init();
  ffn.init(rng);
}

template <typename Scalar>
void EncoderBlock<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
  norm1.visit(prefix + ".norm1", f);
  attn.visit(prefix + ".attn", f);
  norm2.visit(prefix + ".norm2", f);
  ffn.visit(prefix + ".ffn", f);
}

template <typename Scalar>
SymmetricCrossAttention<Scalar>::SymmetricCrossAttention(std::size_t channels, std::size_t heads_,
                                                         std::size_t kernel, std::size_t stride, std::size_t pad)
    : edge_embed(1, channels, kernel, stride, pad),
      ev_query(channels, channels),
      ev_key(channels, channels),
      ev_value(channels, channels),
      ev_out(channels, channels),
      te_query(channels, channels),
      te_key(channels, channels),
      te_value(channels, channels),
      te_out(channels, channels),
      heads(heads_) {}

template <typename Scalar>
TokenGrid<Scalar> SymmetricCrossAttention<Scalar>::operator()(const TokenGrid<Scalar>& features,
                                                              const Tensor<Scalar>& edges,
                                                              std::vector<Tensor<Scalar>>* probs) const {
  const TokenGrid<Scalar> edge_tokens = edge_embed(edges);
  if (edge_tokens.height != features.height || edge_tokens.width != features.width) {
    throw ShapeError("edge tokens tile " + std::to_string(edge_tokens.height) + "x" +
                     std::to_string(edge_tokens.width) + " but features tile " + std::to_string(features.height) +
                     "x" + std::to_string(features.width));
  }
  const Tensor<Scalar>& f = features.tokens;
  const Tensor<Scalar>& e = edge_tokens.tokens;
  Tensor<Scalar> edge_visual = ev_out(multi_head_attention(ev_query(e), ev_key(f), ev_value(f), heads, probs));
  Tensor<Scalar> text_edge = te_out(multi_head_attention(te_query(f), te_key(e), te_value(e), heads, probs));
  return {add(add(edge_visual, text_edge), f), features.height, features.width};
}

template <typename Scalar>
void SymmetricCrossAttention<Scalar>::init(Rng& rng) {
  edge_embed.init(rng);
  for (Linear<Scalar>* l : {&ev_query, &ev_key, &ev_value, &te_query, &te_key, &te_value}) l->init(rng);
  ev_out.zero();
  te_out.zero();
}

template <typename Scalar>
void SymmetricCrossAttention<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
  edge_embed.visit(prefix + ".edge_embed", f);
  ev_query.visit(prefix + ".edge_visual.query", f);
  ev_key.visit(prefix + ".edge_visual.key", f);
  ev_value.visit(prefix + ".edge_visual.value", f);
  ev_out.visit(prefix + ".edge_visual.out", f);
  te_query.visit(prefix + ".text_edge.query", f);
  te_key.visit(prefix + ".text_edge.key", f);
  te_value.visit(prefix + ".text_edge.value", f);
  te_out.visit(prefix + ".text_edge.out", f);
}

template <typename Scalar>
EncoderStage<Scalar>::EncoderStage(std::size_t in_channels, const StageConfig& cfg, std::size_t mlp_ratio)
    : embed(in_channels, cfg.channels, cfg.patch_kernel, cfg.patch_stride, cfg.patch_pad), norm(cfg.channels) {
  for (std::size_t i = 0; i < cfg.depth; ++i) blocks.emplace_back(cfg, mlp_ratio);
}

template <typename Scalar>
TokenGrid<Scalar> EncoderStage<Scalar>::operator()(const Tensor<Scalar>& x) const {
  TokenGrid<Scalar> grid = embed(x);
  for (const auto& block : blocks) grid = block(grid);
  grid.tokens = norm(grid.tokens);
  return grid;
}

template <typename Scalar>
void EncoderStage<Scalar>::init(Rng& rng) {
  embed.init(rng);
  for (auto& b : blocks) b.init(rng);
  norm.init();
}

template <typename Scalar>
void EncoderStage<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
  embed.visit(prefix + ".embed", f);
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit(prefix + ".block" + std::to_string(i), f);
  norm.visit(prefix + ".norm", f);
}

template <typename Scalar>
EdgeGuidedEncoder<Scalar>::EdgeGuidedEncoder(const ModelConfig& cfg, std::size_t in_channels, bool guidance_)
    : guidance(guidance_), fusion_stage(cfg.fusion_stage) {
  cfg.validate();
  std::size_t in = in_channels;
  for (std::size_t i = 0; i < 4; ++i) {
    stages[i] = EncoderStage<Scalar>(in, cfg.stages[i], cfg.mlp_ratio);
    in = cfg.stages[i].channels;
  }
  if (guidance) {
    const StageConfig& target = cfg.stages[fusion_stage - 1];
    if (fusion_stage == 1) {
      fusion = SymmetricCrossAttention<Scalar>(target.channels, target.heads, target.patch_kernel,
                                               target.patch_stride, target.patch_pad);
    } else {
      std::size_t stride = 1;
      for (std::size_t i = 0; i < fusion_stage; ++i) stride *= cfg.stages[i].patch_stride;
      fusion = SymmetricCrossAttention<Scalar>(target.channels, target.heads, stride + 3, stride, stride / 2 + 1);
    }
  }
}

template <typename Scalar>
EncoderOutputs<Scalar> EdgeGuidedEncoder<Scalar>::operator()(const Tensor<Scalar>& x,
                                                             const Tensor<Scalar>& edges) const {
  if (x.rank() != 3 || x.dim(1) % 32 != 0 || x.dim(2) % 32 != 0) {
    throw ShapeError("encoder needs [C x H x W] with H, W divisible by 32, got " + to_string(x.shape()));
  }
  if (guidance && !edges.defined()) throw ShapeError("edge-guided encoder called without an edge map");
  EncoderOutputs<Scalar> out;
  Tensor<Scalar> h = x;
  for (std::size_t i = 0; i < 4; ++i) {
    TokenGrid<Scalar> grid = stages[i](h);
    if (guidance && i + 1 == fusion_stage) {
      out.pre_fusion = grid.map();
      grid = fusion(grid, edges);
    }
    out.stages[i] = grid.map();
    h = out.stages[i];
  }
  return out;
}

template <typename Scalar>
void EdgeGuidedEncoder<Scalar>::init(Rng& rng) {
  for (auto& s : stages) s.init(rng);
  if (guidance) fusion.init(rng);
}

template <typename Scalar>
void EdgeGuidedEncoder<Scalar>::visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
  for (std::size_t i = 0; i < 4; ++i) stages[i].visit(prefix + ".stage" + std::to_string(i + 1), f);
  if (guidance) fusion.visit(prefix + ".fusion", f);
}

#define EDGESEG_INSTANTIATE(S)                                                                          \
  template Tensor<S> multi_head_attention(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,         \
                                          std::size_t, std::vector<Tensor<S>>*);                        \
  template struct OverlapPatchEmbed<S>;                                                                 \
  template struct EfficientSelfAttention<S>;                                                            \
  template struct FeedForward<S>;                                                                       \
  template struct EncoderBlock<S>;                                                                      \
  template struct SymmetricCrossAttention<S>;                                                           \
  template struct EncoderStage<S>;                                                                      \
  template struct EdgeGuidedEncoder<S>;

EDGESEG_INSTANTIATE(float)
EDGESEG_INSTANTIATE(double)

#undef EDGESEG_INSTANTIATE

}  // namespace edgeseg
