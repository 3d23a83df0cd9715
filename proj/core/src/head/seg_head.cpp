#include "atrium/head/seg_head.hpp"

#include <cmath>

#include <c10/util/StringUtil.h>

namespace atrium::head {

namespace F = torch::nn::functional;

void HeadConfig::validate() const {
  if (embed_dim < 1 || channels < 1 || stages < 0 || output_size < 1) {
    throw std::invalid_argument("head configuration fields must be positive");
  }
  if ((channels >> stages) < 1) {
    throw std::invalid_argument(c10::str("cannot halve ", channels, " channels ", stages, " times"));
  }
}

void init_conv_weights(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  // include_self would need the module to already live in a shared_ptr.
  for (auto& child : module.modules(/*include_self=*/false)) {
    if (auto* conv = child->as<torch::nn::Conv2d>()) {
      const auto fan_in = conv->weight[0].numel();
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      conv->weight.uniform_(-bound, bound);
      if (conv->bias.defined()) conv->bias.zero_();
    }
  }
}

LinearClassifierTokenImpl::LinearClassifierTokenImpl(std::int64_t embed_dim, std::int64_t channels) {
  conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(embed_dim, channels, 1)));
}

torch::Tensor LinearClassifierTokenImpl::forward(const torch::Tensor& token_grid) {
  if (token_grid.dim() != 4) {
    throw std::invalid_argument(c10::str("token grid must be [B, gh, gw, D], got ", token_grid.sizes()));
  }
  return conv(token_grid.permute({0, 3, 1, 2}));
}

DecoderImpl::DecoderImpl(const HeadConfig& config) : output_size_(config.output_size) {
  config.validate();
  stages = register_module("stages", torch::nn::ModuleList());
  auto channels = config.channels;
  for (std::int64_t s = 0; s < config.stages; ++s) {
    stages->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels / 2, 3).padding(1)));
    channels /= 2;
  }
  classifier = register_module("classifier", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, 1, 1)));
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& features) {
  auto x = features;
  for (const auto& stage : *stages) {
    x = torch::relu(stage->as<torch::nn::Conv2d>()->forward(x));
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kBilinear)
                              .align_corners(false));
  }
  x = classifier(x);
  if (x.size(2) != output_size_ || x.size(3) != output_size_) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<std::int64_t>{output_size_, output_size_})
                              .mode(torch::kBilinear)
                              .align_corners(false));
  }
  return x;
}

SegmentationHeadImpl::SegmentationHeadImpl(const HeadConfig& config) {
  config.validate();
  token = register_module("token", LinearClassifierToken(config.embed_dim, config.channels));
  decoder = register_module("decoder", Decoder(config));
  init_conv_weights(*this);
}

ViTSegmenter::ViTSegmenter(vit::ViTBackbone backbone_in, std::int64_t head_channels,
                           std::int64_t input_size)
    : input_size_(input_size) {
  if (input_size % backbone_in->variant().patch_size != 0) {
    throw std::invalid_argument(c10::str("ViT input size ", input_size, " is not a multiple of the patch size"));
  }
  backbone = register_module("backbone", std::move(backbone_in));
  backbone->freeze();
  HeadConfig config;
  config.embed_dim = backbone->variant().embed_dim;
  config.channels = head_channels;
  config.output_size = input_size;
  head = register_module("head", SegmentationHead(config));
}

torch::Tensor ViTSegmenter::frozen_features(const torch::Tensor& images) {
  return backbone->encode(images);
}

torch::Tensor ViTSegmenter::trainable_forward(const torch::Tensor& token_grid) {
  return head->forward(token_grid);
}

}  // namespace atrium::head
