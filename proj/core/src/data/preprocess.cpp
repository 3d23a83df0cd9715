#include "atrium/data/preprocess.hpp"

#include <c10/util/StringUtil.h>

#include "atrium/common/errors.hpp"

namespace atrium::data {

namespace F = torch::nn::functional;

namespace {

void require_2d(const torch::Tensor& t, const char* what) {
  if (t.dim() != 2) throw std::invalid_argument(c10::str(what, " must be 2D, got ", t.dim(), "D"));
}

void require_pair(const SliceSample& s) {
  require_2d(s.image, "slice image");
  require_2d(s.mask, "slice mask");
  if (s.image.sizes() != s.mask.sizes()) {
    throw ShapeMismatch(c10::str("slice image ", s.image.sizes(), " vs mask ", s.mask.sizes()));
  }
}

// Offsets of a length-`from` axis centred inside a length-`to` axis.
std::int64_t lead(std::int64_t from, std::int64_t to) { return (to - from) / 2; }

}  // namespace

torch::Tensor pad_to_square(const torch::Tensor& image, std::int64_t side) {
  require_2d(image, "pad_to_square input");
  auto out = torch::zeros({side, side}, image.options());
  const auto h = image.size(0), w = image.size(1);
  // Axes longer than `side` are center-cropped, shorter ones centred.
  const auto src_r = h > side ? lead(side, h) : 0;
  const auto src_c = w > side ? lead(side, w) : 0;
  const auto dst_r = h > side ? 0 : lead(h, side);
  const auto dst_c = w > side ? 0 : lead(w, side);
  const auto rows = std::min(h, side), cols = std::min(w, side);
  out.narrow(0, dst_r, rows).narrow(1, dst_c, cols)
      .copy_(image.narrow(0, src_r, rows).narrow(1, src_c, cols));
  return out;
}

torch::Tensor resize_bilinear(const torch::Tensor& image, std::int64_t height, std::int64_t width) {
  const bool is_2d = image.dim() == 2;
  auto x = is_2d ? image.unsqueeze(0).unsqueeze(0) : image.unsqueeze(0);
  x = x.to(torch::kFloat32);
  if (x.size(2) != height || x.size(3) != width) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<std::int64_t>{height, width})
                              .mode(torch::kBilinear)
                              .align_corners(false));
  }
  return is_2d ? x.squeeze(0).squeeze(0) : x.squeeze(0);
}

torch::Tensor resize_nearest(const torch::Tensor& mask, std::int64_t height, std::int64_t width) {
  if (mask.dim() != 2 && mask.dim() != 3) throw std::invalid_argument("resize_nearest expects 2D or 3D");
  const bool is_2d = mask.dim() == 2;
  if (mask.size(-2) == height && mask.size(-1) == width) return mask.to(torch::kUInt8);
  auto x = (is_2d ? mask.unsqueeze(0) : mask).unsqueeze(0).to(torch::kFloat32);
  // The functional wrapper warns spuriously for nearest-exact, so call the op.
  x = torch::_upsample_nearest_exact2d(x, {height, width});
  x = x.squeeze(0);
  if (is_2d) x = x.squeeze(0);
  return x.to(torch::kUInt8);
}

torch::Tensor zscore(const torch::Tensor& image) {
  auto x = image.to(torch::kFloat32);
  const auto mean = x.mean();
  const auto sd = x.std(/*unbiased=*/false);
  const float s = sd.item<float>();
  return s > 0.0f ? (x - mean) / s : x - mean;
}

PreparedSlice preprocess_baseline(const SliceSample& sample, const BaselinePreprocessing& options) {
  require_pair(sample);
  if (options.target < 1 || options.pad_target < 1) throw std::invalid_argument("non-positive target");
  if (options.channels != 1 && options.channels != 3) throw std::invalid_argument("channels must be 1 or 3");
  const auto h = sample.image.size(0), w = sample.image.size(1);
  if ((h > options.pad_target || w > options.pad_target) && !options.crop_oversize) {
    throw std::invalid_argument(c10::str("slice ", h, "x", w, " exceeds the pad target ",
                                         options.pad_target));
  }
  auto image = pad_to_square(sample.image.to(torch::kFloat32), options.pad_target);
  auto mask = pad_to_square(sample.mask.to(torch::kUInt8), options.pad_target);
  image = zscore(resize_bilinear(image, options.target, options.target));
  mask = resize_nearest(mask, options.target, options.target);
  auto channels = options.channels == 3 ? to_three_channel(image) : image.unsqueeze(0);
  return {channels.contiguous(), mask.contiguous()};
}

PreparedSlice preprocess_vit(const SliceSample& sample, const ViTPreprocessing& options) {
  require_pair(sample);
  auto rgb = to_three_channel(sample.image.to(torch::kFloat32));
  rgb = resize_bilinear(rgb, options.size, options.size);
  if (options.normalization == IntensityNormalization::kPerSliceZScore) {
    rgb = zscore(rgb);
  } else {
    auto mean = torch::tensor({options.mean[0], options.mean[1], options.mean[2]}).view({3, 1, 1});
    auto sd = torch::tensor({options.std[0], options.std[1], options.std[2]}).view({3, 1, 1});
    rgb = (rgb - mean) / sd;
  }
  auto mask = resize_nearest(sample.mask, options.size, options.size);
  return {rgb.contiguous(), mask.contiguous()};
}

torch::Tensor restore_baseline_geometry(const torch::Tensor& mask, std::int64_t height,
                                        std::int64_t width, const BaselinePreprocessing& options) {
  require_2d(mask, "restore_baseline_geometry input");
  auto padded = resize_nearest(mask, options.pad_target, options.pad_target);
  auto out = torch::zeros({height, width}, torch::kUInt8);
  const auto side = options.pad_target;
  // Inverse of pad_to_square: copy back the region that came from the slice.
  const auto src_r = height > side ? 0 : lead(height, side);
  const auto src_c = width > side ? 0 : lead(width, side);
  const auto dst_r = height > side ? lead(side, height) : 0;
  const auto dst_c = width > side ? lead(side, width) : 0;
  const auto rows = std::min(height, side), cols = std::min(width, side);
  out.narrow(0, dst_r, rows).narrow(1, dst_c, cols)
      .copy_(padded.narrow(0, src_r, rows).narrow(1, src_c, cols));
  return out;
}

}  // namespace atrium::data
