#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace atrium::eval {

/// uint8 {0,1} mask: 1 where sigmoid(logit) >= threshold. With
/// `probabilities` set the input is compared to the threshold directly.
/// The boundary is inclusive, so logit 0 at threshold 0.5 is foreground.
torch::Tensor binarize(const torch::Tensor& scores, double threshold = 0.5, bool probabilities = false);

struct OverlapCounts {
  std::int64_t a = 0;             // |a|
  std::int64_t b = 0;             // |b|
  std::int64_t intersection = 0;  // |a & b|

  std::int64_t union_size() const { return a + b - intersection; }
  /// 2|a&b| / (|a|+|b|), 1.0 when both are empty.
  double dice() const;
  /// |a&b| / |a|b|, 1.0 when both are empty.
  double iou() const;
};

/// Throws ShapeMismatch for unequal shapes and std::invalid_argument for
/// non-binary masks.
OverlapCounts overlap(const torch::Tensor& a, const torch::Tensor& b);

double dice(const torch::Tensor& a, const torch::Tensor& b);
double iou(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace atrium::eval
