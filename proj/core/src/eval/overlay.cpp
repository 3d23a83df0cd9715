#include "atrium/eval/overlay.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <c10/util/StringUtil.h>

#include "atrium/common/errors.hpp"

namespace atrium::eval {

torch::Tensor render_overlay(const torch::Tensor& image, const torch::Tensor& pred, const torch::Tensor& gt) {
  if (image.dim() != 2 || image.sizes() != pred.sizes() || image.sizes() != gt.sizes()) {
    throw ShapeMismatch(c10::str("overlay needs equal 2D grids, got ", image.sizes(), ", ", pred.sizes(), ", ",
                                 gt.sizes()));
  }
  auto x = image.to(torch::kFloat64);
  const double lo = x.min().item<double>(), hi = x.max().item<double>();
  auto gray = hi > lo ? ((x - lo) / (hi - lo) * 255.0).round() : torch::zeros_like(x);
  auto g = gray.to(torch::kInt32);
  auto dim = torch::floor_divide(g, 2);
  auto lit = torch::floor_divide(g + 256, 2);  // strictly above `dim` for every gray level
  auto p = pred != 0, t = gt != 0;
  auto r = torch::where(t, lit, torch::where(p, dim, g));
  auto gr = torch::where(p, lit, torch::where(t, dim, g));
  auto b = torch::where(torch::logical_or(p, t), dim, g);
  return torch::stack({r, gr, b}, 2).to(torch::kUInt8);
}

TintCounts count_tints(const torch::Tensor& rgb) {
  if (rgb.dim() != 3 || rgb.size(2) != 3) throw std::invalid_argument("count_tints expects [H, W, 3]");
  auto c = rgb.to(torch::kInt32);
  auto r = c.select(2, 0), g = c.select(2, 1), b = c.select(2, 2);
  TintCounts counts;
  counts.green = torch::logical_and(g > r, r == b).sum().item<std::int64_t>();
  counts.red = torch::logical_and(r > g, g == b).sum().item<std::int64_t>();
  counts.yellow = torch::logical_and(r == g, r > b).sum().item<std::int64_t>();
  return counts;
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
  auto t = image.to(torch::kUInt8).contiguous();
  cv::Mat mat;
  if (t.dim() == 2) {
    mat = cv::Mat(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC1, t.data_ptr<std::uint8_t>()).clone();
  } else if (t.dim() == 3 && t.size(2) == 3) {
    cv::Mat rgb(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC3, t.data_ptr<std::uint8_t>());
    cv::cvtColor(rgb, mat, cv::COLOR_RGB2BGR);
  } else {
    throw std::invalid_argument(c10::str("write_png expects [H, W] or [H, W, 3], got ", image.sizes()));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) throw IoError("cannot write " + path.string());
}

torch::Tensor read_png(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot read image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
}

}  // namespace atrium::eval
