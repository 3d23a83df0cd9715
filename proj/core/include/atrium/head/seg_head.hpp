#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "atrium/models/segmenter.hpp"
#include "atrium/vit/backbone.hpp"

namespace atrium::head {

struct HeadConfig {
  std::int64_t embed_dim = 1536;  // D of the incoming TokenGrid
  std::int64_t channels = 128;    // C after the 1x1 token classifier
  std::int64_t stages = 3;        // conv + x2 upsample stages, halving channels each time
  std::int64_t output_size = 448; // final bilinear resize target

  void validate() const;
};

/// Pointwise (1x1) convolution from D token channels to C feature channels.
/// Takes a TokenGrid [B, gh, gw, D] and returns a FeatureMap [B, C, gh, gw].
class LinearClassifierTokenImpl : public torch::nn::Module {
 public:
  LinearClassifierTokenImpl(std::int64_t embed_dim, std::int64_t channels);
  torch::Tensor forward(const torch::Tensor& token_grid);
  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(LinearClassifierToken);

/// Stages of [3x3 conv, ReLU, x2 bilinear upsample] with channel halving,
/// then a 1x1 conv to one channel and a bilinear resize to output_size.
/// 32 -> 64 -> 128 -> 256 -> 448 with the default configuration.
class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const HeadConfig& config);
  torch::Tensor forward(const torch::Tensor& features);

  torch::nn::ModuleList stages{nullptr};
  torch::nn::Conv2d classifier{nullptr};

 private:
  std::int64_t output_size_;
};
TORCH_MODULE(Decoder);

/// Trainable head: token classifier followed by the decoder.
class SegmentationHeadImpl : public torch::nn::Module {
 public:
  explicit SegmentationHeadImpl(const HeadConfig& config);
  torch::Tensor forward(const torch::Tensor& token_grid) { return decoder(token(token_grid)); }

  LinearClassifierToken token{nullptr};
  Decoder decoder{nullptr};
};
TORCH_MODULE(SegmentationHead);

/// Fan-in scaled uniform weights (He-uniform bound sqrt(6 / fan_in)) and
/// zero biases for every convolution in `module`.
void init_conv_weights(torch::nn::Module& module);

/// Frozen backbone + trainable head; logits = decode(token(encode(x))).
class ViTSegmenter : public models::Segmenter {
 public:
  /// Freezes `backbone`. `head_channels` is C of the token classifier.
  ViTSegmenter(vit::ViTBackbone backbone, std::int64_t head_channels, std::int64_t input_size = 448);

  torch::Tensor frozen_features(const torch::Tensor& images) override;
  torch::Tensor trainable_forward(const torch::Tensor& token_grid) override;

  models::InputPath input_path() const override { return models::InputPath::kViT; }
  std::int64_t input_channels() const override { return 3; }
  std::int64_t input_size() const override { return input_size_; }
  std::string architecture_name() const override { return "vit_head"; }
  torch::nn::Module& checkpoint_module() override { return *head; }

  vit::ViTBackbone backbone{nullptr};
  SegmentationHead head{nullptr};

 private:
  std::int64_t input_size_;
};

}  // namespace atrium::head
