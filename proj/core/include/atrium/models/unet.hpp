#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "atrium/common/tensor_archive.hpp"
#include "atrium/models/segmenter.hpp"

namespace atrium::models {

/// (3x3 conv -> BN -> ReLU) x 2
class DoubleConvImpl : public torch::nn::Module {
 public:
  DoubleConvImpl(std::int64_t in_channels, std::int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& x) { return block->forward(x); }
  torch::nn::Sequential block{nullptr};
};
TORCH_MODULE(DoubleConv);

/// Additive attention gate: alpha = sigmoid(psi(relu(W_g g + W_x x))),
/// output x * alpha with alpha in [0, 1] per pixel.
class AttentionGateImpl : public torch::nn::Module {
 public:
  AttentionGateImpl(std::int64_t gate_channels, std::int64_t skip_channels, std::int64_t inner_channels);
  /// Returns the per-pixel coefficients [B, 1, H, W].
  torch::Tensor coefficients(const torch::Tensor& gate, const torch::Tensor& skip);

  torch::nn::Sequential w_g{nullptr}, w_x{nullptr}, psi{nullptr};
};
TORCH_MODULE(AttentionGate);

/// Transposed-conv upsampling, optional gated skip, concatenation, DoubleConv.
class UpBlockImpl : public torch::nn::Module {
 public:
  UpBlockImpl(std::int64_t in_channels, std::int64_t up_channels, std::int64_t skip_channels,
              std::int64_t out_channels, bool attention);
  /// `forced_gate` replaces the attention coefficients with a constant.
  torch::Tensor forward(const torch::Tensor& coarse, const torch::Tensor& skip,
                        std::optional<double> forced_gate, std::vector<torch::Tensor>* attention_maps);

  torch::nn::ConvTranspose2d up{nullptr};
  AttentionGate gate{nullptr};
  DoubleConv conv{nullptr};
};
TORCH_MODULE(UpBlock);

struct UNetOptions {
  std::int64_t in_channels = 1;
  std::int64_t base_channels = 64;
  std::int64_t input_size = 320;
  bool attention = false;
};

/// Four-level encoder/decoder with skip concatenations and channel doubling
/// per level; optional attention gates on every skip (Attention UNet).
/// Shared submodules carry the same names with and without attention, so
/// weights transplant between the two by name.
class UNet : public Segmenter {
 public:
  explicit UNet(const UNetOptions& options);

  torch::Tensor trainable_forward(const torch::Tensor& x) override;
  InputPath input_path() const override { return InputPath::kBaseline; }
  std::int64_t input_channels() const override { return options_.in_channels; }
  std::int64_t input_size() const override { return options_.input_size; }
  std::string architecture_name() const override { return options_.attention ? "attention_unet" : "unet"; }

  /// Pins every attention gate to a constant (nullopt restores learning).
  void force_gates(std::optional<double> value) { forced_gate_ = value; }
  /// Coefficients recorded by the last forward pass, coarsest level first.
  const std::vector<torch::Tensor>& attention_maps() const { return attention_maps_; }

  DoubleConv inc{nullptr}, down1{nullptr}, down2{nullptr}, down3{nullptr}, down4{nullptr};
  UpBlock up1{nullptr}, up2{nullptr}, up3{nullptr}, up4{nullptr};
  torch::nn::Conv2d outc{nullptr};

 private:
  UNetOptions options_;
  std::optional<double> forced_gate_;
  std::vector<torch::Tensor> attention_maps_;
};

/// torchvision-layout ResNet50 bottleneck.
class BottleneckImpl : public torch::nn::Module {
 public:
  BottleneckImpl(std::int64_t in_channels, std::int64_t width, std::int64_t stride, bool downsample);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr};
  torch::nn::Sequential downsample{nullptr};
};
TORCH_MODULE(Bottleneck);

/// ResNet50 feature extractor with torchvision parameter names (conv1,
/// bn1, layer1..layer4) so classification checkpoints load by name.
class ResNet50EncoderImpl : public torch::nn::Module {
 public:
  ResNet50EncoderImpl();
  /// Five feature stages at strides 2, 4, 8, 16, 32 with 64, 256, 512,
  /// 1024 and 2048 channels.
  std::vector<torch::Tensor> forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr};
  torch::nn::Sequential layer1{nullptr}, layer2{nullptr}, layer3{nullptr}, layer4{nullptr};
};
TORCH_MODULE(ResNet50Encoder);

struct Res50UNetOptions {
  std::int64_t base_channels = 64;
  std::int64_t input_size = 320;
};

/// ResNet50 encoder + UNet-style decoder over its five stages; three-channel input.
class Res50UNet : public Segmenter {
 public:
  explicit Res50UNet(const Res50UNetOptions& options);

  torch::Tensor trainable_forward(const torch::Tensor& x) override;
  InputPath input_path() const override { return InputPath::kBaseline; }
  std::int64_t input_channels() const override { return 3; }
  std::int64_t input_size() const override { return options_.input_size; }
  std::string architecture_name() const override { return "res50_unet"; }

  /// Loads encoder tensors by torchvision name; classifier (fc.*) entries
  /// and other extras are reported as ignored. Keys may carry an
  /// "encoder." prefix.
  LoadManifest load_encoder(const TensorArchive& archive);

  ResNet50Encoder encoder{nullptr};
  UpBlock dec4{nullptr}, dec3{nullptr}, dec2{nullptr}, dec1{nullptr};
  torch::nn::ConvTranspose2d final_up{nullptr};
  DoubleConv final_conv{nullptr};
  torch::nn::Conv2d outc{nullptr};

 private:
  Res50UNetOptions options_;
};

}  // namespace atrium::models
