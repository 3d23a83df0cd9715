#include "atrium/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "atrium/common/errors.hpp"
#include "atrium/common/strings.hpp"
#include "atrium/common/tensor_archive.hpp"

namespace atrium::eval {

namespace {

constexpr const char* kHeader = "method,patient_id,dice,iou";
constexpr const char* kPlusMinus = "\xC2\xB1";

std::string pm(double mean, double sd) { return format_double(mean) + kPlusMinus + format_double(sd); }

std::pair<double, double> parse_pm(const std::string& text) {
  const auto at = text.find(kPlusMinus);
  if (at == std::string::npos) throw FormatError("expected mean±sd, got '" + text + "'");
  return {parse_double(text.substr(0, at)), parse_double(text.substr(at + 2))};
}

}  // namespace

MeanSd mean_sd(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean_sd of no values");
  double sum = 0.0;
  for (double v : values) sum += v;
  MeanSd out;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

MetricReport aggregate(std::string method, std::vector<PatientMetrics> rows) {
  if (rows.empty()) throw std::invalid_argument("aggregate needs at least one patient row");
  std::sort(rows.begin(), rows.end(),
            [](const PatientMetrics& a, const PatientMetrics& b) { return a.patient_id < b.patient_id; });
  std::vector<double> dices, ious;
  std::set<std::string> seen;
  for (const auto& r : rows) {
    if (!seen.insert(r.patient_id).second) throw std::invalid_argument("duplicate patient '" + r.patient_id + "'");
    for (double v : {r.dice, r.iou}) {
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("metric outside [0, 1] for " + r.patient_id);
    }
    dices.push_back(r.dice);
    ious.push_back(r.iou);
  }
  MetricReport report;
  report.method = std::move(method);
  report.per_patient = std::move(rows);
  const auto d = mean_sd(dices), j = mean_sd(ious);
  report.dice_mean = d.mean;
  report.dice_sd = d.sd;
  report.iou_mean = j.mean;
  report.iou_sd = j.sd;
  return report;
}

std::string report_csv(const MetricReport& report) {
  std::string out = std::string(kHeader) + "\n";
  for (const auto& r : report.per_patient) {
    out += report.method + "," + r.patient_id + "," + format_double(r.dice) + "," + format_double(r.iou) + "\n";
  }
  out += report.method + ",summary," + pm(report.dice_mean, report.dice_sd) + "," +
         pm(report.iou_mean, report.iou_sd) + "\n";
  return out;
}

MetricReport parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != kHeader) throw FormatError("report: unexpected header '" + line + "'");
  std::string method;
  std::vector<PatientMetrics> rows;
  bool have_summary = false;
  std::pair<double, double> dice_summary, iou_summary;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split(trim(line), ',');
    if (fields.size() != 4) throw FormatError("report: malformed row '" + line + "'");
    if (method.empty()) method = fields[0];
    if (fields[0] != method) throw FormatError("report: mixed methods in one file");
    if (fields[1] == "summary") {
      dice_summary = parse_pm(fields[2]);
      iou_summary = parse_pm(fields[3]);
      have_summary = true;
    } else {
      rows.push_back({fields[1], parse_double(fields[2]), parse_double(fields[3])});
    }
  }
  if (!have_summary) throw FormatError("report: missing summary row");
  auto report = aggregate(method, std::move(rows));
  if (report.dice_mean != dice_summary.first || report.dice_sd != dice_summary.second ||
      report.iou_mean != iou_summary.first || report.iou_sd != iou_summary.second) {
    throw FormatError("report: summary row disagrees with the per-patient rows");
  }
  return report;
}

void write_report_csv(const std::filesystem::path& path, const MetricReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  atomic_write(path, report_csv(report));
}

MetricReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_report_csv(buffer.str());
}

}  // namespace atrium::eval
