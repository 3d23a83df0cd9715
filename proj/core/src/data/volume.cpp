#include "atrium/data/volume.hpp"

#include <c10/util/StringUtil.h>

#include "atrium/common/errors.hpp"

namespace atrium::data {

Volume::Volume(torch::Tensor voxels, torch::Tensor labels, std::string patient_id,
               std::optional<Spacing> spacing)
    : patient_id_(std::move(patient_id)), spacing_(spacing) {
  if (voxels.dim() != 3 || labels.dim() != 3) {
    throw ShapeMismatch(c10::str("volume '", patient_id_, "' must be 3D (got ", voxels.dim(),
                                "D image, ", labels.dim(), "D labels)"));
  }
  if (voxels.sizes() != labels.sizes()) {
    throw ShapeMismatch(c10::str("volume '", patient_id_, "': image ", voxels.sizes(),
                                " and labels ", labels.sizes(), " differ in shape"));
  }
  if (voxels.numel() == 0) throw std::invalid_argument("volume has an empty dimension");
  voxels_ = voxels.to(torch::kFloat32).contiguous();
  if (!torch::isfinite(voxels_).all().item<bool>()) {
    throw std::invalid_argument("volume '" + patient_id_ + "' has non-finite intensities");
  }
  if (!((labels == 0) | (labels == 1)).all().item<bool>()) {
    throw std::invalid_argument("volume '" + patient_id_ + "' labels are not binary");
  }
  labels_ = labels.to(torch::kUInt8).contiguous();
}

std::vector<SliceSample> extract_slices(const Volume& volume) {
  std::vector<SliceSample> out;
  out.reserve(volume.slices());
  for (std::int64_t k = 0; k < volume.slices(); ++k) {
    out.push_back(SliceSample{volume.voxels()[k], volume.labels()[k], volume.patient_id(), k});
  }
  return out;
}

Volume stack_slices(const std::vector<SliceSample>& slices, std::optional<Spacing> spacing) {
  if (slices.empty()) throw std::invalid_argument("stack_slices: no slices");
  std::vector<torch::Tensor> images, masks;
  for (std::size_t k = 0; k < slices.size(); ++k) {
    const auto& s = slices[k];
    if (s.slice_index != static_cast<std::int64_t>(k)) {
      throw std::invalid_argument("stack_slices: slices must be ordered 0..n-1");
    }
    if (s.patient_id != slices.front().patient_id) {
      throw std::invalid_argument("stack_slices: mixed patient ids");
    }
    images.push_back(s.image);
    masks.push_back(s.mask);
  }
  return Volume(torch::stack(images), torch::stack(masks), slices.front().patient_id, spacing);
}

torch::Tensor to_three_channel(const torch::Tensor& image) {
  if (image.dim() != 2) {
    throw std::invalid_argument(c10::str("to_three_channel expects a 2D grid, got ", image.dim(), "D"));
  }
  return image.unsqueeze(0).expand({3, image.size(0), image.size(1)}).contiguous();
}

torch::Tensor to_three_channel(const SliceSample& sample) { return to_three_channel(sample.image); }

}  // namespace atrium::data
