#pragma once

#include <torch/torch.h>

namespace atrium::train {

/// Mean binary cross-entropy on logits, evaluated in the stable form
/// max(l, 0) - l*y + log(1 + exp(-|l|)). The gradient w.r.t. the logits is
/// exactly (sigmoid(l) - y) / N, including at l = 0.
///
/// Throws ShapeMismatch when shapes differ and std::invalid_argument for
/// targets outside {0, 1}.
torch::Tensor bce_with_logits(const torch::Tensor& logits, const torch::Tensor& targets);

}  // namespace atrium::train
