#include "atrium/train/loss.hpp"

#include <c10/util/StringUtil.h>

#include "atrium/common/errors.hpp"

namespace atrium::train {

namespace {

class BceWithLogits : public torch::autograd::Function<BceWithLogits> {
 public:
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& logits,
                               const torch::Tensor& targets) {
    ctx->save_for_backward({logits, targets});
    auto per_pixel = logits.clamp_min(0) - logits * targets + torch::log1p(torch::exp(-logits.abs()));
    return per_pixel.mean();
  }

  static torch::autograd::variable_list backward(torch::autograd::AutogradContext* ctx,
                                                 torch::autograd::variable_list grad_output) {
    const auto saved = ctx->get_saved_variables();
    const auto& logits = saved[0];
    const auto& targets = saved[1];
    const double scale = 1.0 / static_cast<double>(logits.numel());
    auto grad = (torch::sigmoid(logits) - targets) * (grad_output[0] * scale);
    return {grad, torch::Tensor()};
  }
};

}  // namespace

torch::Tensor bce_with_logits(const torch::Tensor& logits, const torch::Tensor& targets) {
  if (logits.sizes() != targets.sizes()) {
    throw ShapeMismatch(c10::str("logits ", logits.sizes(), " vs targets ", targets.sizes()));
  }
  if (logits.numel() == 0) throw std::invalid_argument("bce_with_logits of an empty tensor");
  auto y = targets.to(logits.scalar_type());
  if (!torch::logical_or(y == 0, y == 1).all().item<bool>()) {
    throw std::invalid_argument("bce_with_logits targets must be 0 or 1");
  }
  return BceWithLogits::apply(logits, y.detach());
}

}  // namespace atrium::train
