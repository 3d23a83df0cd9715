#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace atrium::data {

/// Voxel size in millimetres along (row, column, slice).
using Spacing = std::array<double, 3>;

/// One patient's 3D intensity grid and its binary left-atrium label grid.
///
/// Both grids are stored slice-major as [slices, height, width] tensors
/// (float32 intensities, uint8 labels) so that a 2D slice is a contiguous
/// view. Immutable after construction.
class Volume {
 public:
  /// Throws ShapeMismatch when the grids differ in shape or are not 3D, and
  /// std::invalid_argument for non-binary labels, non-finite intensities or
  /// empty dimensions.
  Volume(torch::Tensor voxels, torch::Tensor labels, std::string patient_id,
         std::optional<Spacing> spacing = std::nullopt);

  std::int64_t height() const { return voxels_.size(1); }
  std::int64_t width() const { return voxels_.size(2); }
  std::int64_t slices() const { return voxels_.size(0); }
  std::int64_t voxel_count() const { return voxels_.numel(); }

  const torch::Tensor& voxels() const { return voxels_; }
  const torch::Tensor& labels() const { return labels_; }
  const std::string& patient_id() const { return patient_id_; }
  const std::optional<Spacing>& spacing() const { return spacing_; }

 private:
  torch::Tensor voxels_;
  torch::Tensor labels_;
  std::string patient_id_;
  std::optional<Spacing> spacing_;
};

/// A single 2D image/mask pair; the training unit of every method.
struct SliceSample {
  torch::Tensor image;  // [H, W] float32
  torch::Tensor mask;   // [H, W] uint8 in {0, 1}
  std::string patient_id;
  std::int64_t slice_index = 0;
};

/// All slices of `volume` in slice order, empty-mask slices included.
std::vector<SliceSample> extract_slices(const Volume& volume);

/// Inverse of extract_slices. Slices must share a patient id and shape and
/// be ordered 0..n-1.
Volume stack_slices(const std::vector<SliceSample>& slices,
                    std::optional<Spacing> spacing = std::nullopt);

/// Replicates a 2D grid into a [3, H, W] channel-first image.
torch::Tensor to_three_channel(const torch::Tensor& image);
torch::Tensor to_three_channel(const SliceSample& sample);

}  // namespace atrium::data
