#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

#include "atrium/data/volume.hpp"
#include "atrium/eval/report.hpp"
#include "atrium/models/segmenter.hpp"
#include "atrium/train/dataset.hpp"

namespace atrium::eval {

/// Segments every slice of `volume` and returns a [S, H, W] uint8 mask at
/// native resolution. Baseline models: pad/resize geometry is undone, then
/// morphological opening and closing are applied per slice. ViT models:
/// nearest resize back to native size, no post-processing.
torch::Tensor predict_volume(models::Segmenter& model, const data::Volume& volume,
                             const train::PreprocessConfig& config, std::int64_t batch = 8);

/// Volumetric Dice/IoU of per-slice masks against the volume's labels.
/// Masks not at native resolution are nearest-resized first. Throws
/// ShapeMismatch when the slice count differs.
PatientMetrics evaluate_patient(const std::vector<torch::Tensor>& slice_masks, const data::Volume& truth);
PatientMetrics evaluate_patient(const torch::Tensor& mask_volume, const data::Volume& truth);

/// Writes `<patient>_<slice>.png` overlays for every slice of a volume.
void write_overlays(const data::Volume& volume, const torch::Tensor& prediction, const std::filesystem::path& dir);

}  // namespace atrium::eval
