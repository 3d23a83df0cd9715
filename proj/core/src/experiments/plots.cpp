#include "atrium/experiments/plots.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <opencv2/imgproc.hpp>

#include "atrium/common/errors.hpp"
#include "atrium/common/strings.hpp"
#include "atrium/common/tensor_archive.hpp"
#include "atrium/eval/overlay.hpp"

namespace atrium::experiments {

std::vector<PlotData> plot_data(const ExperimentResult& result) {
  std::vector<PlotData> plots;
  for (auto mode : {SweepMode::kFractionSweep, SweepMode::kPatientSweep}) {
    // method -> x -> (sum of means, sum of sds, count)
    std::vector<std::string> methods;
    std::map<std::string, std::map<double, std::array<double, 3>>> acc;
    bool any = false;
    for (const auto& cell : result.cells) {
      if (cell.mode != mode) continue;
      any = true;
      if (!cell.ok()) continue;
      if (!acc.count(cell.method)) methods.push_back(cell.method);
      auto& slot = acc[cell.method][cell.x];
      slot[0] += cell.report->dice_mean;
      slot[1] += cell.report->dice_sd;
      slot[2] += 1.0;
    }
    if (!any) continue;
    PlotData plot;
    plot.mode = mode;
    for (const auto& method : methods) {
      PlotSeries series;
      series.method = method;
      for (const auto& [x, s] : acc[method]) {
        series.x.push_back(x);
        series.mean.push_back(s[0] / s[2]);
        series.sd.push_back(s[1] / s[2]);
      }
      plot.series.push_back(std::move(series));
    }
    plots.push_back(std::move(plot));
  }
  if (plots.empty()) throw std::invalid_argument("plots need a sweep result (no fraction or patient cells)");
  return plots;
}

namespace {

const cv::Scalar kPalette[] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214},
                               {189, 103, 148}, {75, 86, 140}};  // BGR

}  // namespace

RenderedPlot render_plot(const PlotData& plot, int width, int height) {
  if (width < 200 || height < 150) throw std::invalid_argument("plot canvas too small");
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int left = 70, right = 170, top = 40, bottom = 60;
  const int plot_w = width - left - right, plot_h = height - top - bottom;

  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  for (const auto& s : plot.series) {
    for (double x : s.x) {
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
    }
  }
  if (!std::isfinite(x_min)) x_min = 0.0, x_max = 1.0;
  const bool log_x = x_min > 0.0 && x_max / x_min > 20.0;
  auto fx = [&](double x) { return log_x ? std::log10(x) : x; };
  double lo = fx(x_min), hi = fx(x_max);
  if (hi <= lo) lo -= 0.5, hi += 0.5;
  auto col = [&](double x) { return left + static_cast<int>(std::lround((fx(x) - lo) / (hi - lo) * plot_w)); };
  auto row = [&](double y) {
    return top + static_cast<int>(std::lround((1.0 - std::clamp(y, 0.0, 1.0)) * plot_h));
  };

  const cv::Scalar axis(0, 0, 0), grid(225, 225, 225);
  for (int i = 0; i <= 10; ++i) {
    const int r = row(i / 10.0);
    cv::line(canvas, {left, r}, {left + plot_w, r}, grid, 1);
    if (i % 2 == 0) {
      cv::putText(canvas, format_double(i / 10.0), {left - 40, r + 5}, cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1,
                  cv::LINE_AA);
    }
  }
  cv::rectangle(canvas, {left, top}, {left + plot_w, top + plot_h}, axis, 1);
  const std::string x_label = plot.mode == SweepMode::kFractionSweep ? "training fraction" : "training patients";
  cv::putText(canvas, x_label + (log_x ? " (log scale)" : ""), {left + plot_w / 2 - 80, height - 15},
              cv::FONT_HERSHEY_SIMPLEX, 0.5, axis, 1, cv::LINE_AA);
  cv::putText(canvas, "Dice", {10, top + plot_h / 2}, cv::FONT_HERSHEY_SIMPLEX, 0.5, axis, 1, cv::LINE_AA);

  std::vector<double> ticks;
  for (const auto& s : plot.series) ticks.insert(ticks.end(), s.x.begin(), s.x.end());
  std::sort(ticks.begin(), ticks.end());
  ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
  for (double t : ticks) {
    cv::line(canvas, {col(t), top + plot_h}, {col(t), top + plot_h + 5}, axis, 1);
    cv::putText(canvas, format_double(t), {col(t) - 12, top + plot_h + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1,
                cv::LINE_AA);
  }

  RenderedPlot out;
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const auto color = kPalette[k % std::size(kPalette)];
    std::vector<cv::Point> band;
    for (std::size_t i = 0; i < s.x.size(); ++i) band.emplace_back(col(s.x[i]), row(s.mean[i] + s.sd[i]));
    for (std::size_t i = s.x.size(); i-- > 0;) band.emplace_back(col(s.x[i]), row(s.mean[i] - s.sd[i]));
    if (band.size() >= 3) {
      cv::Mat layer = canvas.clone();
      cv::fillPoly(layer, std::vector<std::vector<cv::Point>>{band}, color);
      cv::addWeighted(layer, 0.2, canvas, 0.8, 0.0, canvas);
    }
    std::vector<std::pair<int, int>> markers;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const cv::Point p(col(s.x[i]), row(s.mean[i]));
      if (i > 0) cv::line(canvas, {col(s.x[i - 1]), row(s.mean[i - 1])}, p, color, 2, cv::LINE_AA);
      markers.emplace_back(p.x, p.y);
    }
    for (const auto& [c, r] : markers) cv::circle(canvas, {c, r}, 4, color, cv::FILLED, cv::LINE_AA);
    const int ly = top + 20 + static_cast<int>(k) * 22;
    cv::line(canvas, {left + plot_w + 15, ly}, {left + plot_w + 40, ly}, color, 2);
    cv::putText(canvas, s.method, {left + plot_w + 46, ly + 5}, cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1,
                cv::LINE_AA);
    out.markers.push_back(std::move(markers));
  }

  cv::Mat rgb;
  cv::cvtColor(canvas, rgb, cv::COLOR_BGR2RGB);
  out.image = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return out;
}

std::string plot_csv(const PlotData& plot) {
  std::string out = "method,x,dice_mean,dice_sd\n";
  for (const auto& s : plot.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      out += s.method + "," + format_double(s.x[i]) + "," + format_double(s.mean[i]) + "," + format_double(s.sd[i]) +
             "\n";
    }
  }
  return out;
}

PlotData parse_plot_csv(const std::string& text, SweepMode mode) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "method,x,dice_mean,dice_sd") {
    throw FormatError("plot csv: unexpected header '" + line + "'");
  }
  PlotData plot;
  plot.mode = mode;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    if (f.size() != 4) throw FormatError("plot csv: malformed row '" + line + "'");
    if (plot.series.empty() || plot.series.back().method != f[0]) plot.series.push_back({f[0], {}, {}, {}});
    auto& s = plot.series.back();
    s.x.push_back(parse_double(f[1]));
    s.mean.push_back(parse_double(f[2]));
    s.sd.push_back(parse_double(f[3]));
  }
  return plot;
}

std::vector<std::filesystem::path> emit_plots(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  std::filesystem::create_directories(dir);
  for (const auto& plot : plot_data(result)) {
    const auto stem = to_string(plot.mode);
    eval::write_png(dir / (stem + ".png"), render_plot(plot).image);
    atomic_write(dir / (stem + ".csv"), plot_csv(plot));
    written.push_back(dir / (stem + ".png"));
  }
  return written;
}

}  // namespace atrium::experiments
