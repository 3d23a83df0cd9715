#include "atrium/train/dataset.hpp"

#include <stdexcept>

namespace atrium::train {

data::BaselinePreprocessing baseline_options(const models::Segmenter& model, const PreprocessConfig& config) {
  data::BaselinePreprocessing options;
  options.target = model.input_size();
  options.pad_target = config.pad_target;
  options.crop_oversize = config.crop_oversize;
  options.channels = model.input_channels();
  return options;
}

data::ViTPreprocessing vit_options(const models::Segmenter& model, const PreprocessConfig& config) {
  data::ViTPreprocessing options;
  options.size = model.input_size();
  options.normalization = config.vit_normalization;
  return options;
}

data::PreparedSlice prepare_slice(const models::Segmenter& model, const data::SliceSample& sample,
                                  const PreprocessConfig& config) {
  if (model.input_path() == models::InputPath::kViT) {
    return data::preprocess_vit(sample, vit_options(model, config));
  }
  return data::preprocess_baseline(sample, baseline_options(model, config));
}

TensorDataset TensorDataset::select(const std::vector<std::int64_t>& rows) const {
  TensorDataset out;
  auto index = torch::tensor(rows, torch::kInt64);
  out.features = features.index_select(0, index);
  out.targets = targets.index_select(0, index);
  for (auto r : rows) {
    out.patient_ids.push_back(patient_ids.at(static_cast<std::size_t>(r)));
    out.slice_indices.push_back(slice_indices.at(static_cast<std::size_t>(r)));
  }
  return out;
}

TensorDataset prepare_dataset(models::Segmenter& model, std::span<const data::SliceSample> samples,
                              const PreprocessConfig& config, std::int64_t batch) {
  if (samples.empty()) throw std::invalid_argument("prepare_dataset needs at least one slice");
  if (batch < 1) throw std::invalid_argument("feature batch must be >= 1");
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> features, targets;
  TensorDataset out;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch)) {
    const auto stop = std::min(samples.size(), start + static_cast<std::size_t>(batch));
    std::vector<torch::Tensor> images;
    for (auto i = start; i < stop; ++i) {
      auto prepared = prepare_slice(model, samples[i], config);
      images.push_back(prepared.image);
      targets.push_back(prepared.mask.to(torch::kFloat32).unsqueeze(0));
      out.patient_ids.push_back(samples[i].patient_id);
      out.slice_indices.push_back(samples[i].slice_index);
    }
    features.push_back(model.frozen_features(torch::stack(images)).contiguous());
  }
  out.features = torch::cat(features);
  out.targets = torch::stack(targets);
  return out;
}

}  // namespace atrium::train
