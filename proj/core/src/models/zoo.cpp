#include "atrium/models/zoo.hpp"

#include <cstdlib>
#include <stdexcept>

#include <c10/util/StringUtil.h>

#include "atrium/common/errors.hpp"
#include "atrium/common/tensor_archive.hpp"
#include "atrium/head/seg_head.hpp"
#include "atrium/models/unet.hpp"
#include "atrium/vit/backbone.hpp"

namespace atrium::models {

std::string to_string(Architecture architecture) {
  switch (architecture) {
    case Architecture::kUNet: return "unet";
    case Architecture::kAttentionUNet: return "attention_unet";
    case Architecture::kRes50UNet: return "res50_unet";
    case Architecture::kViTHead: return "vit_head";
  }
  return "unknown";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "unet") return Architecture::kUNet;
  if (name == "attention_unet" || name == "attunet") return Architecture::kAttentionUNet;
  if (name == "res50_unet" || name == "resnet50_unet") return Architecture::kRes50UNet;
  if (name == "vit_head" || name == "vit") return Architecture::kViTHead;
  throw ConfigError("unknown architecture '" + std::string(name) +
                    "' (expected unet, attention_unet, res50_unet or vit_head)");
}

ModelSpec ModelSpec::defaults(Architecture architecture) {
  ModelSpec spec;
  spec.architecture = architecture;
  spec.input_size = architecture == Architecture::kViTHead ? 448 : 320;
  return spec;
}

void ModelSpec::validate() const {
  if (architecture == Architecture::kViTHead) {
    if (input_size < 14 || input_size % 14 != 0) {
      throw ConfigError(c10::str("vit_head input_size must be a positive multiple of 14, got ", input_size));
    }
    if (head_channels < 8) throw ConfigError(c10::str("head_channels must be >= 8, got ", head_channels));
    vit::BackboneVariant::from_name(variant);
    return;
  }
  const std::int64_t divisor = architecture == Architecture::kRes50UNet ? 32 : 16;
  if (input_size < 2 * divisor || input_size % divisor != 0) {
    throw ConfigError(c10::str(to_string(architecture), " input_size must be a multiple of ", divisor,
                               " and at least ", 2 * divisor, ", got ", input_size));
  }
  if (base_channels < 8) throw ConfigError(c10::str("base_channels must be >= 8, got ", base_channels));
  if (pretrained_encoder && architecture != Architecture::kRes50UNet) {
    throw ConfigError("pretrained_encoder applies to res50_unet only");
  }
  if (pretrained_encoder && encoder_checkpoint.empty()) {
    throw ConfigError("pretrained_encoder requires encoder_checkpoint");
  }
}

std::filesystem::path resolve_checkpoint(const std::filesystem::path& path) {
  if (path.empty() || std::filesystem::exists(path)) return path;
  if (path.is_relative()) {
    if (const char* cache = std::getenv("ATRIUM_PROBE_CACHE"); cache && *cache) {
      auto candidate = std::filesystem::path(cache) / path;
      if (std::filesystem::exists(candidate)) return candidate;
    }
  }
  throw IoError("checkpoint not found: " + path.string());
}

SegmenterPtr build_unet(const ModelSpec& spec) {
  return std::make_shared<UNet>(UNetOptions{1, spec.base_channels, spec.input_size, false});
}

SegmenterPtr build_attention_unet(const ModelSpec& spec) {
  return std::make_shared<UNet>(UNetOptions{1, spec.base_channels, spec.input_size, true});
}

SegmenterPtr build_res50_unet(const ModelSpec& spec) {
  auto model = std::make_shared<Res50UNet>(Res50UNetOptions{spec.base_channels, spec.input_size});
  if (spec.pretrained_encoder) {
    model->load_encoder(load_archive(resolve_checkpoint(spec.encoder_checkpoint)));
  }
  return model;
}

SegmenterPtr build_vit_head(const ModelSpec& spec) {
  auto variant = vit::BackboneVariant::from_name(spec.variant);
  if (variant.name == "tiny-test") {
    variant = vit::BackboneVariant::tiny_test(spec.tiny_embed_dim, spec.tiny_depth, spec.tiny_heads);
  }
  vit::ViTBackbone backbone(variant);
  if (!spec.backbone_checkpoint.empty()) backbone->load_checkpoint(resolve_checkpoint(spec.backbone_checkpoint));
  return std::make_shared<head::ViTSegmenter>(backbone, spec.head_channels, spec.input_size);
}

SegmenterPtr build_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  torch::manual_seed(seed);
  switch (spec.architecture) {
    case Architecture::kUNet: return build_unet(spec);
    case Architecture::kAttentionUNet: return build_attention_unet(spec);
    case Architecture::kRes50UNet: return build_res50_unet(spec);
    case Architecture::kViTHead: return build_vit_head(spec);
  }
  throw ConfigError("unknown architecture");
}

}  // namespace atrium::models
