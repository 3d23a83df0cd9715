#include "atrium/eval/metrics.hpp"

#include <cmath>

#include <c10/util/StringUtil.h>

#include "atrium/common/errors.hpp"

namespace atrium::eval {

torch::Tensor binarize(const torch::Tensor& scores, double threshold, bool probabilities) {
  if (probabilities) return (scores >= threshold).to(torch::kUInt8);
  if (threshold <= 0.0) return torch::ones_like(scores, torch::kUInt8);
  if (threshold >= 1.0) return torch::zeros_like(scores, torch::kUInt8);
  // sigmoid(l) >= t  <=>  l >= log(t / (1 - t)); exact for t = 0.5.
  const double cut = threshold == 0.5 ? 0.0 : std::log(threshold / (1.0 - threshold));
  return (scores.to(torch::kFloat64) >= cut).to(torch::kUInt8);
}

double OverlapCounts::dice() const {
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(intersection) / static_cast<double>(a + b);
}

double OverlapCounts::iou() const {
  const auto u = union_size();
  if (u == 0) return 1.0;
  return static_cast<double>(intersection) / static_cast<double>(u);
}

namespace {

torch::Tensor as_bool(const torch::Tensor& mask, const char* name) {
  if (mask.scalar_type() == torch::kBool) return mask;
  if (!torch::logical_or(mask == 0, mask == 1).all().item<bool>()) {
    throw std::invalid_argument(c10::str(name, " is not a binary mask"));
  }
  return mask != 0;
}

}  // namespace

OverlapCounts overlap(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw ShapeMismatch(c10::str("mask shapes differ: ", a.sizes(), " vs ", b.sizes()));
  auto x = as_bool(a, "first mask");
  auto y = as_bool(b, "second mask");
  OverlapCounts counts;
  counts.a = x.sum().item<std::int64_t>();
  counts.b = y.sum().item<std::int64_t>();
  counts.intersection = torch::logical_and(x, y).sum().item<std::int64_t>();
  return counts;
}

double dice(const torch::Tensor& a, const torch::Tensor& b) { return overlap(a, b).dice(); }

double iou(const torch::Tensor& a, const torch::Tensor& b) { return overlap(a, b).iou(); }

}  // namespace atrium::eval
