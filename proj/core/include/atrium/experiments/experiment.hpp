#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "atrium/eval/report.hpp"
#include "atrium/experiments/config.hpp"

namespace atrium::experiments {

/// One (method, sweep value, seed) grid cell.
struct CellResult {
  std::string method;
  SweepMode mode = SweepMode::kFull;
  std::string value = "1";  // fraction, patient count or "all"
  double x = 1.0;           // numeric value: the fraction or the number of patients used
  std::uint64_t seed = 0;
  std::optional<eval::MetricReport> report;
  std::string error;  // set when the cell failed
  std::string test_split_hash;
  std::int64_t train_slices = 0;
  std::int64_t train_patients = 0;
  std::int64_t best_epoch = 0;
  std::int64_t epochs_run = 0;
  std::filesystem::path run_dir;

  bool ok() const { return report.has_value(); }
};

struct ExperimentResult {
  std::string command;  // "compare" or "fewshot"
  std::string config_hash;
  std::string started_at;
  std::string finished_at;
  std::vector<CellResult> cells;
};

/// Trains every method on the full training split, evaluates on the test
/// split and writes into `out`: table1.csv, reports/<method>_seed<k>.csv,
/// runs/<method>/seed_<k>/, split/ and provenance.json. A failing method is
/// recorded as an error row; the others still run. Progress lines go to
/// `log` when given.
ExperimentResult run_full_comparison(const ExperimentConfig& config, const std::filesystem::path& out,
                                     std::ostream* log = nullptr);

/// Fraction and patient-count sweeps over the training split (few-shot
/// epochs capped at fewshot_max_epochs), always evaluated on the full test
/// split. Writes fewshot.csv, one plot (PNG + CSV) per sweep, split/,
/// runs/ and provenance.json. ConfigError when a sweep value does not fit
/// the corpus.
ExperimentResult run_fewshot(const ExperimentConfig& config, const std::filesystem::path& out,
                             std::ostream* log = nullptr);

/// Row of the comparison table (table1.csv). Seed is the numeric seed or "mean" for the cross-seed average.
struct TableRow {
  std::string method;
  std::string seed;
  double dice_mean = 0.0;
  double dice_sd = 0.0;
  double iou_mean = 0.0;
  double iou_sd = 0.0;
  std::string status;  // "ok" or "error: ..."

  /// Field-wise; NaN metrics (failed cells) compare equal to each other.
  bool operator==(const TableRow& other) const;
};

/// Long-form row of the sweep table (fewshot.csv).
struct SweepRow {
  std::string method;
  std::string mode;
  std::string value;
  std::string seed;
  double dice_mean = 0.0;
  double dice_sd = 0.0;
  double iou_mean = 0.0;
  double iou_sd = 0.0;
  std::string status;

  bool operator==(const SweepRow& other) const;
};

/// Full-mode cells in result order; with several seeds each method gains a
/// "mean" row averaging its successful seeds cell-wise.
std::vector<TableRow> table_rows(const ExperimentResult& result);
/// Sweep cells in result order, plus "mean" rows as for table_rows.
std::vector<SweepRow> sweep_rows(const ExperimentResult& result);

std::string table_csv(const std::vector<TableRow>& rows);
std::vector<TableRow> parse_table_csv(const std::string& text);
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> parse_sweep_csv(const std::string& text);

std::string read_text(const std::filesystem::path& path);

/// Config hash, timestamps and one entry per cell (status, test-split hash,
/// training size, run directory).
void write_provenance(const std::filesystem::path& path, const ExperimentResult& result);

}  // namespace atrium::experiments
