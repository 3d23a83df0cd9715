#include "atrium/eval/morphology.hpp"

#include <stdexcept>

#include <c10/util/StringUtil.h>

namespace atrium::eval {

StructuringElement::StructuringElement(torch::Tensor element) {
  if (element.dim() != 2 || element.size(0) % 2 == 0 || element.size(1) % 2 == 0) {
    throw std::invalid_argument(c10::str("structuring element must be 2D with odd sides, got ", element.sizes()));
  }
  mask_ = (element != 0).contiguous();
  if (!torch::equal(mask_, mask_.flip({0, 1}))) {
    throw std::invalid_argument("structuring element must be point-symmetric");
  }
  if (!mask_.any().item<bool>()) throw std::invalid_argument("structuring element is empty");
}

StructuringElement StructuringElement::square(std::int64_t side) {
  return StructuringElement(torch::ones({side, side}, torch::kBool));
}

StructuringElement StructuringElement::cross(std::int64_t side) {
  auto m = torch::zeros({side, side}, torch::kBool);
  m.select(0, side / 2).fill_(true);
  m.select(1, side / 2).fill_(true);
  return StructuringElement(m);
}

namespace {

torch::Tensor as_3d_bool(const torch::Tensor& mask) {
  if (mask.dim() != 2 && mask.dim() != 3) {
    throw std::invalid_argument(c10::str("morphology expects a 2D or 3D mask, got ", mask.sizes()));
  }
  auto m = mask.scalar_type() == torch::kBool ? mask : mask != 0;
  return mask.dim() == 2 ? m.unsqueeze(0) : m;
}

torch::Tensor restore(const torch::Tensor& m, const torch::Tensor& like) {
  auto out = m.to(torch::kUInt8);
  return like.dim() == 2 ? out.squeeze(0) : out;
}

// OR (dilate) or AND (erode) of the mask shifted by every element offset,
// with background flowing in from outside.
torch::Tensor shift_combine(const torch::Tensor& m, const StructuringElement& k, bool dilation) {
  const auto ry = k.radius_y(), rx = k.radius_x();
  const auto h = m.size(1), w = m.size(2);
  auto padded = torch::constant_pad_nd(m.to(torch::kUInt8), {rx, rx, ry, ry}, 0).to(torch::kBool);
  auto out = dilation ? torch::zeros_like(m) : torch::ones_like(m);
  auto element = k.mask().accessor<bool, 2>();
  for (std::int64_t dy = -ry; dy <= ry; ++dy) {
    for (std::int64_t dx = -rx; dx <= rx; ++dx) {
      if (!element[dy + ry][dx + rx]) continue;
      auto window = padded.narrow(1, ry + dy, h).narrow(2, rx + dx, w);
      out = dilation ? torch::logical_or(out, window) : torch::logical_and(out, window);
    }
  }
  return out;
}

}  // namespace

torch::Tensor erode(const torch::Tensor& mask, const StructuringElement& k) {
  return restore(shift_combine(as_3d_bool(mask), k, false), mask);
}

torch::Tensor dilate(const torch::Tensor& mask, const StructuringElement& k) {
  return restore(shift_combine(as_3d_bool(mask), k, true), mask);
}

torch::Tensor morph_open(const torch::Tensor& mask, const StructuringElement& k) {
  auto m = as_3d_bool(mask);
  return restore(shift_combine(shift_combine(m, k, false), k, true), mask);
}

torch::Tensor morph_close(const torch::Tensor& mask, const StructuringElement& k) {
  auto m = as_3d_bool(mask);
  const auto ry = k.radius_y(), rx = k.radius_x();
  auto canvas = torch::constant_pad_nd(m.to(torch::kUInt8), {rx, rx, ry, ry}, 0).to(torch::kBool);
  auto closed = shift_combine(shift_combine(canvas, k, true), k, false);
  return restore(closed.narrow(1, ry, m.size(1)).narrow(2, rx, m.size(2)), mask);
}

torch::Tensor postprocess_baseline(const torch::Tensor& mask) {
  return morph_close(morph_open(mask));
}

}  // namespace atrium::eval
