#pragma once

#include <cstdint>
#include <filesystem>

#include <torch/torch.h>

namespace atrium::eval {

/// [H, W, 3] uint8 RGB rendering of a slice: min-max scaled grayscale with
/// prediction-only pixels tinted green, ground-truth-only pixels red and
/// agreement pixels yellow (both channels raised).
torch::Tensor render_overlay(const torch::Tensor& image, const torch::Tensor& pred, const torch::Tensor& gt);

struct TintCounts {
  std::int64_t green = 0;   // G raised alone
  std::int64_t red = 0;     // R raised alone
  std::int64_t yellow = 0;  // R and G raised together
};

/// Classifies every pixel of a rendered overlay.
TintCounts count_tints(const torch::Tensor& rgb);

/// Lossless PNG of an [H, W, 3] RGB or [H, W] gray uint8 tensor.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);
/// Reads a PNG back as [H, W, 3] RGB uint8.
torch::Tensor read_png(const std::filesystem::path& path);

}  // namespace atrium::eval
