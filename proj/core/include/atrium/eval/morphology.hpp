#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace atrium::eval {

/// Binary structuring element centred on its middle pixel. Must be odd-sized
/// and point-symmetric (k(i, j) == k(-i, -j)).
class StructuringElement {
 public:
  explicit StructuringElement(torch::Tensor element);
  /// Full side x side square; side 3 is the default element.
  static StructuringElement square(std::int64_t side = 3);
  static StructuringElement cross(std::int64_t side = 3);

  const torch::Tensor& mask() const { return mask_; }
  std::int64_t radius_y() const { return mask_.size(0) / 2; }
  std::int64_t radius_x() const { return mask_.size(1) / 2; }

 private:
  torch::Tensor mask_;  // [h, w] bool
};

// All operations accept [H, W] or [S, H, W] uint8/bool {0,1} masks (3D input
// is processed slice by slice) and return uint8. Pixels outside the image
// are background.

torch::Tensor erode(const torch::Tensor& mask, const StructuringElement& k = StructuringElement::square());
torch::Tensor dilate(const torch::Tensor& mask, const StructuringElement& k = StructuringElement::square());

/// Erosion then dilation: removes specks smaller than the element.
torch::Tensor morph_open(const torch::Tensor& mask, const StructuringElement& k = StructuringElement::square());

/// Dilation then erosion, computed on a canvas padded by the element radius
/// so that the result always contains the input, also at the image border.
torch::Tensor morph_close(const torch::Tensor& mask, const StructuringElement& k = StructuringElement::square());

/// Opening followed by closing with the default element (baseline models only).
torch::Tensor postprocess_baseline(const torch::Tensor& mask);

}  // namespace atrium::eval
