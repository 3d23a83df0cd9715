#include "atrium/models/unet.hpp"

#include <stdexcept>

#include <c10/util/StringUtil.h>

namespace atrium::models {

namespace nn = torch::nn;

namespace {

nn::Conv2d conv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride = 1,
                std::int64_t padding = 0, bool bias = false) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(padding).bias(bias));
}

void check_input(const torch::Tensor& x, std::int64_t channels, std::int64_t divisor, const char* name) {
  if (x.dim() != 4 || x.size(1) != channels) {
    throw std::invalid_argument(c10::str(name, " expects [B, ", channels, ", H, W], got ", x.sizes()));
  }
  if (x.size(2) % divisor != 0 || x.size(3) % divisor != 0) {
    throw std::invalid_argument(c10::str(name, " input sides must be multiples of ", divisor, ", got ", x.sizes()));
  }
}

}  // namespace

DoubleConvImpl::DoubleConvImpl(std::int64_t in_channels, std::int64_t out_channels) {
  block = register_module("block", nn::Sequential(conv(in_channels, out_channels, 3, 1, 1),
                                                  nn::BatchNorm2d(out_channels), nn::ReLU(),
                                                  conv(out_channels, out_channels, 3, 1, 1),
                                                  nn::BatchNorm2d(out_channels), nn::ReLU()));
}

AttentionGateImpl::AttentionGateImpl(std::int64_t gate_channels, std::int64_t skip_channels,
                                     std::int64_t inner_channels) {
  w_g = register_module("w_g", nn::Sequential(conv(gate_channels, inner_channels, 1, 1, 0, true),
                                              nn::BatchNorm2d(inner_channels)));
  w_x = register_module("w_x", nn::Sequential(conv(skip_channels, inner_channels, 1, 1, 0, true),
                                              nn::BatchNorm2d(inner_channels)));
  psi = register_module("psi", nn::Sequential(conv(inner_channels, 1, 1, 1, 0, true), nn::BatchNorm2d(1),
                                              nn::Sigmoid()));
}

torch::Tensor AttentionGateImpl::coefficients(const torch::Tensor& gate, const torch::Tensor& skip) {
  return psi->forward(torch::relu(w_g->forward(gate) + w_x->forward(skip)));
}

UpBlockImpl::UpBlockImpl(std::int64_t in_channels, std::int64_t up_channels, std::int64_t skip_channels,
                         std::int64_t out_channels, bool attention) {
  up = register_module("up", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in_channels, up_channels, 2).stride(2)));
  if (attention) {
    gate = register_module("gate", AttentionGate(up_channels, skip_channels, std::max<std::int64_t>(1, skip_channels / 2)));
  }
  conv = register_module("conv", DoubleConv(up_channels + skip_channels, out_channels));
}

torch::Tensor UpBlockImpl::forward(const torch::Tensor& coarse, const torch::Tensor& skip,
                                   std::optional<double> forced_gate,
                                   std::vector<torch::Tensor>* attention_maps) {
  auto g = up->forward(coarse);
  auto s = skip;
  if (gate) {
    auto alpha = forced_gate ? torch::full({s.size(0), 1, s.size(2), s.size(3)}, *forced_gate, s.options())
                             : gate->coefficients(g, s);
    if (attention_maps) attention_maps->push_back(alpha.detach());
    s = s * alpha;
  }
  return conv->forward(torch::cat({s, g}, 1));
}

UNet::UNet(const UNetOptions& options) : options_(options) {
  const auto b = options.base_channels;
  if (b < 1 || options.in_channels < 1) throw std::invalid_argument("UNet channels must be positive");
  inc = register_module("inc", DoubleConv(options.in_channels, b));
  down1 = register_module("down1", DoubleConv(b, 2 * b));
  down2 = register_module("down2", DoubleConv(2 * b, 4 * b));
  down3 = register_module("down3", DoubleConv(4 * b, 8 * b));
  down4 = register_module("down4", DoubleConv(8 * b, 16 * b));
  up1 = register_module("up1", UpBlock(16 * b, 8 * b, 8 * b, 8 * b, options.attention));
  up2 = register_module("up2", UpBlock(8 * b, 4 * b, 4 * b, 4 * b, options.attention));
  up3 = register_module("up3", UpBlock(4 * b, 2 * b, 2 * b, 2 * b, options.attention));
  up4 = register_module("up4", UpBlock(2 * b, b, b, b, options.attention));
  outc = register_module("outc", conv(b, 1, 1, 1, 0, true));
}

torch::Tensor UNet::trainable_forward(const torch::Tensor& x) {
  check_input(x, options_.in_channels, 16, options_.attention ? "AttentionUNet" : "UNet");
  attention_maps_.clear();
  auto* maps = options_.attention ? &attention_maps_ : nullptr;
  auto pool = [](const torch::Tensor& t) { return torch::max_pool2d(t, 2); };
  auto x1 = inc->forward(x);
  auto x2 = down1->forward(pool(x1));
  auto x3 = down2->forward(pool(x2));
  auto x4 = down3->forward(pool(x3));
  auto x5 = down4->forward(pool(x4));
  auto y = up1->forward(x5, x4, forced_gate_, maps);
  y = up2->forward(y, x3, forced_gate_, maps);
  y = up3->forward(y, x2, forced_gate_, maps);
  y = up4->forward(y, x1, forced_gate_, maps);
  return outc->forward(y);
}

BottleneckImpl::BottleneckImpl(std::int64_t in_channels, std::int64_t width, std::int64_t stride,
                               bool with_downsample) {
  conv1 = register_module("conv1", conv(in_channels, width, 1));
  bn1 = register_module("bn1", nn::BatchNorm2d(width));
  conv2 = register_module("conv2", conv(width, width, 3, stride, 1));
  bn2 = register_module("bn2", nn::BatchNorm2d(width));
  conv3 = register_module("conv3", conv(width, 4 * width, 1));
  bn3 = register_module("bn3", nn::BatchNorm2d(4 * width));
  if (with_downsample) {
    downsample = register_module("downsample", nn::Sequential(conv(in_channels, 4 * width, 1, stride),
                                                              nn::BatchNorm2d(4 * width)));
  }
}

torch::Tensor BottleneckImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(bn1(conv1(x)));
  y = torch::relu(bn2(conv2(y)));
  y = bn3(conv3(y));
  return torch::relu(y + (downsample ? downsample->forward(x) : x));
}

namespace {

nn::Sequential make_layer(std::int64_t in_channels, std::int64_t width, std::int64_t blocks, std::int64_t stride) {
  nn::Sequential layer;
  layer->push_back(Bottleneck(in_channels, width, stride, true));
  for (std::int64_t i = 1; i < blocks; ++i) layer->push_back(Bottleneck(4 * width, width, 1, false));
  return layer;
}

}  // namespace

ResNet50EncoderImpl::ResNet50EncoderImpl() {
  conv1 = register_module("conv1", conv(3, 64, 7, 2, 3));
  bn1 = register_module("bn1", nn::BatchNorm2d(64));
  layer1 = register_module("layer1", make_layer(64, 64, 3, 1));
  layer2 = register_module("layer2", make_layer(256, 128, 4, 2));
  layer3 = register_module("layer3", make_layer(512, 256, 6, 2));
  layer4 = register_module("layer4", make_layer(1024, 512, 3, 2));
}

std::vector<torch::Tensor> ResNet50EncoderImpl::forward(const torch::Tensor& x) {
  auto f1 = torch::relu(bn1(conv1(x)));
  auto f2 = layer1->forward(torch::max_pool2d(f1, 3, 2, 1));
  auto f3 = layer2->forward(f2);
  auto f4 = layer3->forward(f3);
  auto f5 = layer4->forward(f4);
  return {f1, f2, f3, f4, f5};
}

Res50UNet::Res50UNet(const Res50UNetOptions& options) : options_(options) {
  const auto b = options.base_channels;
  if (b < 1) throw std::invalid_argument("Res50UNet base_channels must be positive");
  encoder = register_module("encoder", ResNet50Encoder());
  dec4 = register_module("dec4", UpBlock(2048, 16 * b, 1024, 16 * b, false));
  dec3 = register_module("dec3", UpBlock(16 * b, 8 * b, 512, 8 * b, false));
  dec2 = register_module("dec2", UpBlock(8 * b, 4 * b, 256, 4 * b, false));
  dec1 = register_module("dec1", UpBlock(4 * b, 2 * b, 64, 2 * b, false));
  final_up = register_module("final_up", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(2 * b, b, 2).stride(2)));
  final_conv = register_module("final_conv", DoubleConv(b, b));
  outc = register_module("outc", conv(b, 1, 1, 1, 0, true));
}

torch::Tensor Res50UNet::trainable_forward(const torch::Tensor& x) {
  check_input(x, 3, 32, "Res50UNet");
  auto f = encoder->forward(x);
  auto y = dec4->forward(f[4], f[3], std::nullopt, nullptr);
  y = dec3->forward(y, f[2], std::nullopt, nullptr);
  y = dec2->forward(y, f[1], std::nullopt, nullptr);
  y = dec1->forward(y, f[0], std::nullopt, nullptr);
  return outc->forward(final_conv->forward(final_up->forward(y)));
}

LoadManifest Res50UNet::load_encoder(const TensorArchive& archive) {
  const auto expected = module_state(*encoder);
  bool prefixed = !archive.tensors.count(expected.begin()->first) &&
                  archive.tensors.count("encoder." + expected.begin()->first);
  const std::string prefix = prefixed ? "encoder." : "";
  TensorMap subset;
  LoadManifest manifest;
  for (const auto& [name, tensor] : archive.tensors) {
    if (name.rfind(prefix, 0) == 0 && expected.count(name.substr(prefix.size()))) {
      subset.emplace(name.substr(prefix.size()), tensor);
    } else {
      manifest.ignored.push_back(name);
    }
  }
  // Older checkpoints omit the BatchNorm step counters.
  for (const auto& [name, tensor] : expected) {
    if (!subset.count(name) && name.ends_with("num_batches_tracked")) subset.emplace(name, tensor.clone());
  }
  auto loaded = load_module_state(*encoder, subset);
  manifest.loaded = std::move(loaded.loaded);
  return manifest;
}

}  // namespace atrium::models
