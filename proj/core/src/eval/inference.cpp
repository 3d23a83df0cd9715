#include "atrium/eval/inference.hpp"

#include <cstdio>

#include <c10/util/StringUtil.h>

#include "atrium/common/errors.hpp"
#include "atrium/data/preprocess.hpp"
#include "atrium/eval/metrics.hpp"
#include "atrium/eval/morphology.hpp"
#include "atrium/eval/overlay.hpp"

namespace atrium::eval {

torch::Tensor predict_volume(models::Segmenter& model, const data::Volume& volume,
                             const train::PreprocessConfig& config, std::int64_t batch) {
  const bool was_training = model.is_training();
  model.eval();
  torch::NoGradGuard no_grad;
  const auto slices = data::extract_slices(volume);
  const auto h = volume.height(), w = volume.width();
  std::vector<torch::Tensor> masks;
  for (std::size_t start = 0; start < slices.size(); start += static_cast<std::size_t>(batch)) {
    const auto stop = std::min(slices.size(), start + static_cast<std::size_t>(batch));
    std::vector<torch::Tensor> images;
    for (auto i = start; i < stop; ++i) images.push_back(train::prepare_slice(model, slices[i], config).image);
    auto logits = model.forward(torch::stack(images));
    auto binary = binarize(logits.select(1, 0));
    for (std::int64_t i = 0; i < binary.size(0); ++i) {
      if (model.input_path() == models::InputPath::kViT) {
        masks.push_back(data::resize_nearest(binary[i], h, w));
      } else {
        masks.push_back(data::restore_baseline_geometry(binary[i], h, w, train::baseline_options(model, config)));
      }
    }
  }
  model.train(was_training);
  auto stacked = torch::stack(masks).to(torch::kUInt8);
  if (model.input_path() == models::InputPath::kBaseline) stacked = postprocess_baseline(stacked);
  return stacked;
}

PatientMetrics evaluate_patient(const std::vector<torch::Tensor>& slice_masks, const data::Volume& truth) {
  if (static_cast<std::int64_t>(slice_masks.size()) != truth.slices()) {
    throw ShapeMismatch(c10::str(truth.patient_id(), ": ", slice_masks.size(), " slice predictions for ",
                                 truth.slices(), " slices"));
  }
  std::vector<torch::Tensor> native;
  for (const auto& m : slice_masks) {
    if (m.dim() != 2) throw ShapeMismatch(c10::str("slice prediction must be 2D, got ", m.sizes()));
    native.push_back(m.size(0) == truth.height() && m.size(1) == truth.width()
                         ? m.to(torch::kUInt8)
                         : data::resize_nearest(m.to(torch::kUInt8), truth.height(), truth.width()));
  }
  const auto counts = overlap(torch::stack(native), truth.labels());
  return {truth.patient_id(), counts.dice(), counts.iou()};
}

PatientMetrics evaluate_patient(const torch::Tensor& mask_volume, const data::Volume& truth) {
  if (mask_volume.dim() != 3) throw ShapeMismatch(c10::str("expected [S, H, W] predictions, got ", mask_volume.sizes()));
  const auto slices = mask_volume.unbind(0);
  return evaluate_patient(std::vector<torch::Tensor>(slices.begin(), slices.end()), truth);
}

void write_overlays(const data::Volume& volume, const torch::Tensor& prediction, const std::filesystem::path& dir) {
  if (prediction.sizes() != volume.labels().sizes()) {
    throw ShapeMismatch(c10::str("prediction ", prediction.sizes(), " vs volume ", volume.labels().sizes()));
  }
  for (std::int64_t s = 0; s < volume.slices(); ++s) {
    char name[32];
    std::snprintf(name, sizeof(name), "_%03lld.png", static_cast<long long>(s));
    write_png(dir / (volume.patient_id() + name),
              render_overlay(volume.voxels()[s], prediction[s], volume.labels()[s]));
  }
}

}  // namespace atrium::eval
