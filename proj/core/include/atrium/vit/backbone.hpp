#pragma once

#include <cstdint>
#include <filesystem>

#include <torch/torch.h>

#include "atrium/common/tensor_archive.hpp"
#include "atrium/vit/variant.hpp"

namespace atrium::vit {

/// Splits [3, H, W] (or [B, 3, H, W]) into non-overlapping patches, row-major:
/// [N, 3, p, p] (or [B, N, 3, p, p]) with N = (H / p) * (W / p).
/// std::invalid_argument when H or W is not a multiple of `patch`.
torch::Tensor patchify(const torch::Tensor& image, std::int64_t patch = 14);

/// Inverse of patchify for a grid_h x grid_w patch layout.
torch::Tensor untile(const torch::Tensor& patches, std::int64_t grid_h, std::int64_t grid_w);

// Module names below mirror the checkpoint keys, e.g.
// encoder.layer.3.attention.attention.query.weight.

class PatchEmbeddingsImpl : public torch::nn::Module {
 public:
  PatchEmbeddingsImpl(std::int64_t embed_dim, std::int64_t patch_size);
  torch::nn::Conv2d projection{nullptr};
};
TORCH_MODULE(PatchEmbeddings);

class EmbeddingsImpl : public torch::nn::Module {
 public:
  explicit EmbeddingsImpl(const BackboneVariant& variant);
  /// Patches [B, N, 3, p, p] -> tokens [B, N + 1, D] (class token first).
  torch::Tensor forward(const torch::Tensor& patches, std::int64_t grid_h, std::int64_t grid_w);
  /// Positional table for a grid_h x grid_w layout, [1, 1 + N, D].
  torch::Tensor positions(std::int64_t grid_h, std::int64_t grid_w) const;

  torch::Tensor cls_token;
  torch::Tensor position_embeddings;
  PatchEmbeddings patch_embeddings{nullptr};

 private:
  std::int64_t pos_grid_;
};
TORCH_MODULE(Embeddings);

class SelfAttentionImpl : public torch::nn::Module {
 public:
  SelfAttentionImpl(std::int64_t dim, std::int64_t heads);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Linear query{nullptr}, key{nullptr}, value{nullptr};

 private:
  std::int64_t heads_;
};
TORCH_MODULE(SelfAttention);

class AttentionOutputImpl : public torch::nn::Module {
 public:
  explicit AttentionOutputImpl(std::int64_t dim);
  torch::nn::Linear dense{nullptr};
};
TORCH_MODULE(AttentionOutput);

class AttentionImpl : public torch::nn::Module {
 public:
  AttentionImpl(std::int64_t dim, std::int64_t heads);
  torch::Tensor forward(const torch::Tensor& x);
  SelfAttention attention{nullptr};
  AttentionOutput output{nullptr};
};
TORCH_MODULE(Attention);

class LayerScaleImpl : public torch::nn::Module {
 public:
  explicit LayerScaleImpl(std::int64_t dim);
  torch::Tensor forward(const torch::Tensor& x) { return x * lambda1; }
  torch::Tensor lambda1;
};
TORCH_MODULE(LayerScale);

class FeedForwardBlockImpl : public torch::nn::Module {
 public:
  FeedForwardBlockImpl(std::int64_t dim, std::int64_t hidden, FeedForward kind);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  FeedForward kind_;
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(FeedForwardBlock);

/// Pre-norm transformer block with layer-scaled residual branches.
class BlockImpl : public torch::nn::Module {
 public:
  explicit BlockImpl(const BackboneVariant& variant);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  Attention attention{nullptr};
  LayerScale layer_scale1{nullptr}, layer_scale2{nullptr};
  FeedForwardBlock mlp{nullptr};
};
TORCH_MODULE(Block);

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const BackboneVariant& variant);
  torch::Tensor forward(torch::Tensor x);
  torch::nn::ModuleList layer{nullptr};
};
TORCH_MODULE(Encoder);

/// Frozen vision-transformer feature extractor.
///
/// encode() maps preprocessed [B, 3, H, W] images to a TokenGrid
/// [B, H / 14, W / 14, D] of patch embeddings (32 x 32 x D at the canonical
/// 448 x 448 input); the class token takes part in attention and is then
/// dropped. Weights are randomly initialised (trunc-normal, std 0.02) until
/// a checkpoint is loaded. After freeze() the module is safe to share across
/// threads for inference.
class ViTBackboneImpl : public torch::nn::Module {
 public:
  explicit ViTBackboneImpl(BackboneVariant variant);

  /// [B, N, 3, p, p] patches -> [B, N + 1, D] tokens (projection, class
  /// token, positional embeddings).
  torch::Tensor embed_tokens(const torch::Tensor& patches, std::int64_t grid_h, std::int64_t grid_w);
  /// Transformer blocks and final layer norm over a token sequence.
  torch::Tensor encode_tokens(const torch::Tensor& tokens);
  /// [B, 3, H, W] or [3, H, W] -> TokenGrid [B, H/p, W/p, D].
  torch::Tensor encode(const torch::Tensor& images);
  torch::Tensor forward(const torch::Tensor& images) { return encode(images); }

  /// Populates every parameter from a named-tensor archive, validating it
  /// against the variant's schema (MissingKey, ShapeMismatch). A stored
  /// positional table for another grid side is accepted.
  LoadManifest load_weights(const TensorArchive& archive);
  LoadManifest load_checkpoint(const std::filesystem::path& path);
  TensorArchive to_archive() const;

  /// Excludes every parameter from gradient updates and switches to
  /// inference mode; the forward computation is unchanged.
  void freeze();
  bool frozen() const { return frozen_; }
  /// Keeps a frozen backbone in inference mode.
  void train(bool on = true) override;

  const BackboneVariant& variant() const { return variant_; }

  Embeddings embeddings{nullptr};
  Encoder encoder{nullptr};
  torch::nn::LayerNorm layernorm{nullptr};

 private:
  BackboneVariant variant_;
  bool frozen_ = false;
};
TORCH_MODULE(ViTBackbone);

}  // namespace atrium::vit
