#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "atrium/data/preprocess.hpp"
#include "atrium/data/volume.hpp"
#include "atrium/models/segmenter.hpp"

namespace atrium::train {

/// Preprocessing knobs that are not fixed by the model itself.
struct PreprocessConfig {
  std::int64_t pad_target = 640;  // baseline path: square every slice is padded to
  bool crop_oversize = false;
  data::IntensityNormalization vit_normalization = data::IntensityNormalization::kPretrainStatistics;
};

data::BaselinePreprocessing baseline_options(const models::Segmenter& model, const PreprocessConfig& config);
data::ViTPreprocessing vit_options(const models::Segmenter& model, const PreprocessConfig& config);

/// Routes a slice through the chain that matches the model's input path.
data::PreparedSlice prepare_slice(const models::Segmenter& model, const data::SliceSample& sample,
                                  const PreprocessConfig& config);

/// Preprocessed slices with the model's frozen stage already applied.
struct TensorDataset {
  torch::Tensor features;  // [N, ...] input of Segmenter::trainable_forward
  torch::Tensor targets;   // [N, 1, S, S] float32 in {0, 1}
  std::vector<std::string> patient_ids;
  std::vector<std::int64_t> slice_indices;

  std::int64_t size() const { return features.defined() ? features.size(0) : 0; }
  TensorDataset select(const std::vector<std::int64_t>& rows) const;
};

/// Preprocesses every sample and runs Segmenter::frozen_features over them
/// in batches of `batch` without building a graph. Throws
/// std::invalid_argument on an empty sample list.
TensorDataset prepare_dataset(models::Segmenter& model, std::span<const data::SliceSample> samples,
                              const PreprocessConfig& config, std::int64_t batch = 16);

}  // namespace atrium::train
