#include "atrium/models/segmenter.hpp"

namespace atrium::models {

std::vector<torch::Tensor> Segmenter::trainable_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& p : parameters()) {
    if (p.requires_grad()) out.push_back(p);
  }
  return out;
}

std::int64_t Segmenter::trainable_parameter_count() const {
  return parameter_count(trainable_parameters());
}

std::int64_t parameter_count(const std::vector<torch::Tensor>& parameters) {
  std::int64_t n = 0;
  for (const auto& p : parameters) n += p.numel();
  return n;
}

}  // namespace atrium::models
