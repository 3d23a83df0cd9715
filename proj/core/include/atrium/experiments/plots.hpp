#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "atrium/experiments/experiment.hpp"

namespace atrium::experiments {

struct PlotSeries {
  std::string method;
  std::vector<double> x;     // ascending
  std::vector<double> mean;  // Dice mean (averaged over seeds)
  std::vector<double> sd;    // Dice SD (averaged over seeds)
};

struct PlotData {
  SweepMode mode = SweepMode::kFractionSweep;
  std::vector<PlotSeries> series;
};

/// One PlotData per sweep mode present in the result, one series per method,
/// failed cells left out. std::invalid_argument when the result holds no
/// sweep cells.
std::vector<PlotData> plot_data(const ExperimentResult& result);

struct RenderedPlot {
  torch::Tensor image;                                        // [H, W, 3] uint8 RGB
  std::vector<std::vector<std::pair<int, int>>> markers;     // per series, (column, row) of each point
};

/// Line per method with a shaded +-SD band; log-scaled x when the values
/// span more than a factor of 20.
RenderedPlot render_plot(const PlotData& plot, int width = 800, int height = 500);

/// `method,x,dice_mean,dice_sd` rows.
std::string plot_csv(const PlotData& plot);
PlotData parse_plot_csv(const std::string& text, SweepMode mode);

/// Writes `<mode>.png` and `<mode>.csv` per plot into `dir`; returns the PNG paths.
std::vector<std::filesystem::path> emit_plots(const ExperimentResult& result, const std::filesystem::path& dir);

}  // namespace atrium::experiments
