#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "atrium/models/segmenter.hpp"

namespace atrium::models {

enum class Architecture { kUNet, kAttentionUNet, kRes50UNet, kViTHead };

std::string to_string(Architecture architecture);
/// "unet" | "attention_unet" | "res50_unet" | "vit_head".
Architecture parse_architecture(std::string_view name);

/// Everything needed to construct one model.
struct ModelSpec {
  Architecture architecture = Architecture::kUNet;
  std::int64_t input_size = 320;
  std::int64_t base_channels = 64;
  bool pretrained_encoder = false;
  std::filesystem::path encoder_checkpoint;  // res50_unet with pretrained_encoder

  // vit_head
  std::string variant = "giant";
  std::filesystem::path backbone_checkpoint;  // empty: random initialisation
  std::int64_t head_channels = 128;
  std::int64_t tiny_embed_dim = 64;
  std::int64_t tiny_depth = 2;
  std::int64_t tiny_heads = 4;

  /// Defaults per architecture: 320 px and 64 base channels for the CNNs,
  /// 448 px for the ViT head.
  static ModelSpec defaults(Architecture architecture);

  /// CNN input sizes must be multiples of 16 (32 for res50_unet), the ViT
  /// input a multiple of the 14-pixel patch; base_channels >= 8.
  void validate() const;
};

/// Resolves a checkpoint path: used as given when it exists, otherwise
/// looked up relative to $ATRIUM_PROBE_CACHE when that is set.
std::filesystem::path resolve_checkpoint(const std::filesystem::path& path);

/// Constructs the model with torch's generator seeded by `seed`, so equal
/// seeds give identical initial parameters. Checkpoints named in the spec
/// are loaded; a ViT backbone is frozen.
SegmenterPtr build_model(const ModelSpec& spec, std::uint64_t seed);

SegmenterPtr build_unet(const ModelSpec& spec);
SegmenterPtr build_attention_unet(const ModelSpec& spec);
SegmenterPtr build_res50_unet(const ModelSpec& spec);
SegmenterPtr build_vit_head(const ModelSpec& spec);

}  // namespace atrium::models
