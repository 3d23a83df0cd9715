#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace atrium::models {

/// Which preprocessing chain a model consumes.
enum class InputPath {
  kBaseline,  // pad / resize / z-score, morphological post-processing
  kViT,       // three-channel resize + normalisation only
};

/// Common interface of every segmentation model: images in, one logit map out.
///
/// forward(x) == trainable_forward(frozen_features(x)). The first stage
/// holds no trainable parameters, so its output may be computed once per
/// sample and cached by the training loop; for the CNN baselines it is the
/// identity.
class Segmenter : public torch::nn::Module {
 public:
  /// Parameter-free (frozen) prefix of the model, [B, ...] -> [B, ...].
  virtual torch::Tensor frozen_features(const torch::Tensor& images) { return images; }
  /// Trainable remainder producing [B, 1, H, W] logits.
  virtual torch::Tensor trainable_forward(const torch::Tensor& features) = 0;

  torch::Tensor forward(const torch::Tensor& images) {
    return trainable_forward(frozen_features(images));
  }

  virtual InputPath input_path() const = 0;
  virtual std::int64_t input_channels() const = 0;
  virtual std::int64_t input_size() const = 0;
  virtual std::string architecture_name() const = 0;

  /// Module whose state makes up a model checkpoint. The ViT model stores
  /// its head only; backbone weights live in their own archive.
  virtual torch::nn::Module& checkpoint_module() { return *this; }

  std::vector<torch::Tensor> trainable_parameters() const;
  std::int64_t trainable_parameter_count() const;
};

using SegmenterPtr = std::shared_ptr<Segmenter>;

std::int64_t parameter_count(const std::vector<torch::Tensor>& parameters);

}  // namespace atrium::models
