#pragma once

#include <array>
#include <cstdint>

#include <torch/torch.h>

#include "atrium/data/volume.hpp"

namespace atrium::data {

/// Pad / resize / normalize chain shared by the CNN baselines.
struct BaselinePreprocessing {
  std::int64_t target = 320;      // output side length
  std::int64_t pad_target = 640;  // corpus-maximum square
  bool crop_oversize = false;     // center-crop inputs larger than pad_target instead of failing
  std::int64_t channels = 1;      // 3 replicates the slice (ResNet stem)
};

enum class IntensityNormalization {
  kPretrainStatistics,  // fixed per-channel mean/std of the backbone's pretraining data
  kPerSliceZScore,
};

struct ViTPreprocessing {
  std::int64_t size = 448;
  IntensityNormalization normalization = IntensityNormalization::kPretrainStatistics;
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};
};

struct PreparedSlice {
  torch::Tensor image;  // [C, S, S] float32
  torch::Tensor mask;   // [S, S] uint8
};

/// Symmetric zero padding of a 2D grid to side x side (center crop of any
/// axis that is already larger).
torch::Tensor pad_to_square(const torch::Tensor& image, std::int64_t side);

torch::Tensor resize_bilinear(const torch::Tensor& image, std::int64_t height, std::int64_t width);

/// Nearest-neighbour resize of a 2D or [N, H, W] binary mask; stays binary.
torch::Tensor resize_nearest(const torch::Tensor& mask, std::int64_t height, std::int64_t width);

/// (x - mean) / std over the whole grid; a constant grid only gets centered.
torch::Tensor zscore(const torch::Tensor& image);

PreparedSlice preprocess_baseline(const SliceSample& sample, const BaselinePreprocessing& options = {});

PreparedSlice preprocess_vit(const SliceSample& sample, const ViTPreprocessing& options = {});

/// Maps a baseline-geometry mask [target, target] back to the native
/// height x width grid: nearest resize to pad_target, then undo the padding.
torch::Tensor restore_baseline_geometry(const torch::Tensor& mask, std::int64_t height,
                                        std::int64_t width, const BaselinePreprocessing& options);

}  // namespace atrium::data
