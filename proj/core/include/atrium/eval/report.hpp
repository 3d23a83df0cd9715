#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace atrium::eval {

struct PatientMetrics {
  std::string patient_id;
  double dice = 0.0;
  double iou = 0.0;
};

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample SD (n - 1); 0 for a single value
};

MeanSd mean_sd(std::span<const double> values);

struct MetricReport {
  std::string method;
  std::vector<PatientMetrics> per_patient;  // sorted by patient_id
  double dice_mean = 0.0;
  double dice_sd = 0.0;
  double iou_mean = 0.0;
  double iou_sd = 0.0;
};

/// Sorts rows by patient id and computes mean and sample SD of both metrics.
/// Throws std::invalid_argument for no rows, duplicate ids or metrics
/// outside [0, 1].
MetricReport aggregate(std::string method, std::vector<PatientMetrics> rows);

/// `method,patient_id,dice,iou` rows followed by one
/// `method,summary,<dice_mean>±<dice_sd>,<iou_mean>±<iou_sd>` row. Numbers
/// use the shortest representation that reads back to the same double.
std::string report_csv(const MetricReport& report);
MetricReport parse_report_csv(const std::string& text);

void write_report_csv(const std::filesystem::path& path, const MetricReport& report);
MetricReport read_report_csv(const std::filesystem::path& path);

}  // namespace atrium::eval
