#include "atrium/experiments/experiment.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "atrium/common/errors.hpp"
#include "atrium/common/random.hpp"
#include "atrium/common/strings.hpp"
#include "atrium/common/tensor_archive.hpp"
#include "atrium/data/corpus.hpp"
#include "atrium/experiments/plots.hpp"
#include "atrium/experiments/run.hpp"

namespace atrium::experiments {

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Loaded corpus, split and training/validation slices shared by all cells.
struct Workbench {
  data::Corpus corpus;
  data::DatasetSplit split;
  std::vector<data::SliceSample> train_slices;
  std::vector<data::SliceSample> val_slices;
  train::PreprocessConfig preprocess;
};

Workbench open_workbench(const ExperimentConfig& config, const std::filesystem::path& out) {
  if (config.data.root.empty()) throw ConfigError("data.root is not set");
  Workbench bench{data::Corpus::open(config.data.root, config.data.patterns), {}, {}, {}, {}};
  if (!config.split.manifest.empty()) {
    bench.split = data::read_split_manifest(config.split.manifest);
  } else if (config.split.counts) {
    bench.split = data::split_patients(bench.corpus.ids(), config.split.seed, *config.split.counts);
  } else {
    bench.split = data::split_patients(bench.corpus.ids(), config.split.seed);
  }
  data::write_split_manifest(bench.split, out / "split");
  bench.train_slices = collect_slices(load_volumes(bench.corpus, bench.split.train_ids));
  bench.val_slices = collect_slices(load_volumes(bench.corpus, bench.split.val_ids));
  bench.preprocess.pad_target = config.data.pad_target > 0 ? config.data.pad_target : bench.corpus.max_side();
  bench.preprocess.crop_oversize = config.data.crop_oversize;
  bench.preprocess.vit_normalization = config.data.vit_normalization;
  return bench;
}

struct CachedData {
  train::TensorDataset train;
  train::TensorDataset val;
};

// Prepared datasets depend only on the method and the seed (through the
// frozen backbone), so sweep cells of one method/seed share them.
class DatasetCache {
 public:
  const CachedData& get(const std::string& method, std::uint64_t seed, models::Segmenter& model,
                        const Workbench& bench) {
    const auto key = std::make_pair(method, seed);
    if (key_ != key || !data_) {
      data_.reset();
      data_ = std::make_unique<CachedData>(CachedData{
          train::prepare_dataset(model, bench.train_slices, bench.preprocess),
          train::prepare_dataset(model, bench.val_slices, bench.preprocess)});
      key_ = key;
    }
    return *data_;
  }

 private:
  std::pair<std::string, std::uint64_t> key_;
  std::unique_ptr<CachedData> data_;
};

std::vector<std::string> patients_of(const train::TensorDataset& data) {
  std::set<std::string> ids(data.patient_ids.begin(), data.patient_ids.end());
  return {ids.begin(), ids.end()};
}

void run_cell(CellResult& cell, const Workbench& bench, const MethodConfig& method, std::int64_t max_epochs,
              const std::vector<std::int64_t>* rows, DatasetCache& cache, bool overlays) {
  RunConfig run;
  run.method_name = method.name;
  run.model = method.model;
  run.train = method.train;
  run.train.seed = cell.seed;
  run.train.max_epochs = max_epochs;
  run.preprocess = bench.preprocess;

  auto model = models::build_model(run.model, cell.seed);
  const auto& cached = cache.get(method.name, cell.seed, *model, bench);
  const auto train_data = rows ? cached.train.select(*rows) : cached.train;
  cell.train_slices = train_data.size();
  const auto train_patients = patients_of(train_data);
  cell.train_patients = static_cast<std::int64_t>(train_patients.size());
  audit_held_out(bench.split, train_patients, patients_of(cached.val));

  auto trained = execute_run(run, model, train_data, cached.val, cell.run_dir);
  cell.best_epoch = trained.checkpoint.best_epoch;
  cell.epochs_run = static_cast<std::int64_t>(trained.checkpoint.history.size());

  // Test volumes are read fresh for every cell; the hash proves they never change.
  const auto test = load_volumes(bench.corpus, bench.split.test_ids);
  cell.test_split_hash = volumes_hash(test);
  std::optional<std::filesystem::path> overlay_dir;
  if (overlays) overlay_dir = cell.run_dir / "overlays";
  cell.report = evaluate_model(*trained.model, test, run.preprocess, method.name, overlay_dir);
}

void guarded(CellResult& cell, std::ostream* log, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    cell.report.reset();
    cell.error = e.what();
  }
  if (log) {
    *log << "[" << cell.method << " " << to_string(cell.mode) << " " << cell.value << " seed " << cell.seed << "] ";
    if (cell.ok()) {
      *log << "dice " << format_double(cell.report->dice_mean) << " iou " << format_double(cell.report->iou_mean)
           << " (best epoch " << cell.best_epoch << "/" << cell.epochs_run << ")\n";
    } else {
      *log << "FAILED: " << cell.error << "\n";
    }
    log->flush();
  }
}

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

}  // namespace

ExperimentResult run_full_comparison(const ExperimentConfig& config, const std::filesystem::path& out,
                                     std::ostream* log) {
  config.validate();
  ExperimentResult result;
  result.command = "compare";
  result.config_hash = config.hash();
  result.started_at = utc_now();
  std::filesystem::create_directories(out);
  const auto bench = open_workbench(config, out);
  DatasetCache cache;
  for (const auto& method : config.methods) {
    for (auto seed : config.seeds) {
      CellResult cell;
      cell.method = method.name;
      cell.seed = seed;
      cell.run_dir = out / "runs" / method.name / seed_dir(seed);
      guarded(cell, log, [&] { run_cell(cell, bench, method, method.train.max_epochs, nullptr, cache, config.overlays); });
      if (cell.ok()) {
        eval::write_report_csv(out / "reports" / (method.name + "_seed" + std::to_string(seed) + ".csv"), *cell.report);
      }
      result.cells.push_back(std::move(cell));
    }
  }
  result.finished_at = utc_now();
  atomic_write(out / "table1.csv", table_csv(table_rows(result)));
  write_provenance(out / "provenance.json", result);
  return result;
}

ExperimentResult run_fewshot(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream* log) {
  config.validate();
  if (config.fractions.empty() && config.patients.empty()) throw ConfigError("fewshot needs fractions or patients");
  ExperimentResult result;
  result.command = "fewshot";
  result.config_hash = config.hash();
  result.started_at = utc_now();
  std::filesystem::create_directories(out);
  const auto bench = open_workbench(config, out);

  std::vector<std::string> slice_patients;
  for (const auto& s : bench.train_slices) slice_patients.push_back(s.patient_id);
  const auto available = data::distinct_patients(bench.train_slices);
  for (auto p : config.patients) {
    if (p > static_cast<std::int64_t>(available)) {
      throw ConfigError("patient count " + std::to_string(p) + " exceeds the " + std::to_string(available) +
                        " training patients");
    }
  }

  DatasetCache cache;
  for (const auto& method : config.methods) {
    const auto epochs = std::min(method.train.max_epochs, config.fewshot_max_epochs);
    for (auto seed : config.seeds) {
      auto run_one = [&](SweepMode mode, const std::string& label, double x, std::vector<std::int64_t> rows) {
        CellResult cell;
        cell.method = method.name;
        cell.mode = mode;
        cell.value = label;
        cell.x = x;
        cell.seed = seed;
        cell.run_dir = out / "runs" / method.name / (to_string(mode) + "_" + label) / seed_dir(seed);
        guarded(cell, log, [&] { run_cell(cell, bench, method, epochs, &rows, cache, config.overlays); });
        result.cells.push_back(std::move(cell));
      };
      for (double f : config.fractions) {
        const auto idx = data::subset_indices_by_fraction(bench.train_slices.size(), f, seed);
        run_one(SweepMode::kFractionSweep, format_double(f), f, {idx.begin(), idx.end()});
      }
      for (auto p : config.patients) {
        const auto k = p == 0 ? available : static_cast<std::size_t>(p);
        const auto idx = data::subset_indices_by_patients(slice_patients, k, seed);
        run_one(SweepMode::kPatientSweep, p == 0 ? "all" : std::to_string(p), static_cast<double>(k),
                {idx.begin(), idx.end()});
      }
    }
  }
  result.finished_at = utc_now();
  atomic_write(out / "fewshot.csv", sweep_csv(sweep_rows(result)));
  bool any_ok = false;
  for (const auto& c : result.cells) any_ok = any_ok || c.ok();
  if (any_ok) emit_plots(result, out / "plots");
  write_provenance(out / "provenance.json", result);
  return result;
}

namespace {

std::string number(double v) { return std::isnan(v) ? "" : format_double(v); }

double parse_number(const std::string& s) {
  return s.empty() ? std::numeric_limits<double>::quiet_NaN() : parse_double(s);
}

std::string status_of(const CellResult& cell) {
  if (cell.ok()) return "ok";
  auto message = cell.error;
  for (auto& ch : message) {
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  }
  return "error: " + message;
}

struct Stats {
  double dice_mean, dice_sd, iou_mean, iou_sd;
};

Stats stats_of(const CellResult& cell) {
  if (!cell.ok()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, nan, nan};
  }
  return {cell.report->dice_mean, cell.report->dice_sd, cell.report->iou_mean, cell.report->iou_sd};
}

// Cell-wise average over the successful seeds of a group of cells.
std::pair<Stats, std::string> average(const std::vector<const CellResult*>& group) {
  Stats sum{0, 0, 0, 0};
  int n = 0;
  for (const auto* c : group) {
    if (!c->ok()) continue;
    const auto s = stats_of(*c);
    sum.dice_mean += s.dice_mean;
    sum.dice_sd += s.dice_sd;
    sum.iou_mean += s.iou_mean;
    sum.iou_sd += s.iou_sd;
    ++n;
  }
  if (n == 0) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {{nan, nan, nan, nan}, "error: every seed failed"};
  }
  return {{sum.dice_mean / n, sum.dice_sd / n, sum.iou_mean / n, sum.iou_sd / n}, "ok"};
}

std::vector<std::string> split_row(const std::string& line, std::size_t fields, const char* what) {
  auto parts = split(trim(line), ',');
  if (parts.size() != fields) throw FormatError(std::string(what) + ": malformed row '" + line + "'");
  return parts;
}

}  // namespace

namespace {

bool same_value(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

}  // namespace

bool TableRow::operator==(const TableRow& o) const {
  return method == o.method && seed == o.seed && same_value(dice_mean, o.dice_mean) &&
         same_value(dice_sd, o.dice_sd) && same_value(iou_mean, o.iou_mean) && same_value(iou_sd, o.iou_sd) &&
         status == o.status;
}

bool SweepRow::operator==(const SweepRow& o) const {
  return method == o.method && mode == o.mode && value == o.value && seed == o.seed &&
         same_value(dice_mean, o.dice_mean) && same_value(dice_sd, o.dice_sd) && same_value(iou_mean, o.iou_mean) &&
         same_value(iou_sd, o.iou_sd) && status == o.status;
}

std::vector<TableRow> table_rows(const ExperimentResult& result) {
  std::vector<TableRow> rows;
  std::vector<std::string> order;
  std::map<std::string, std::vector<const CellResult*>> groups;
  for (const auto& cell : result.cells) {
    if (cell.mode != SweepMode::kFull) continue;
    const auto s = stats_of(cell);
    rows.push_back({cell.method, std::to_string(cell.seed), s.dice_mean, s.dice_sd, s.iou_mean, s.iou_sd, status_of(cell)});
    if (!groups.count(cell.method)) order.push_back(cell.method);
    groups[cell.method].push_back(&cell);
  }
  std::vector<TableRow> out;
  for (const auto& method : order) {
    for (const auto& r : rows) {
      if (r.method == method) out.push_back(r);
    }
    if (groups[method].size() > 1) {
      const auto [s, status] = average(groups[method]);
      out.push_back({method, "mean", s.dice_mean, s.dice_sd, s.iou_mean, s.iou_sd, status});
    }
  }
  return out;
}

std::vector<SweepRow> sweep_rows(const ExperimentResult& result) {
  std::vector<SweepRow> out;
  std::vector<std::tuple<std::string, SweepMode, std::string>> order;
  std::map<std::tuple<std::string, SweepMode, std::string>, std::vector<const CellResult*>> groups;
  for (const auto& cell : result.cells) {
    if (cell.mode == SweepMode::kFull) continue;
    const auto key = std::make_tuple(cell.method, cell.mode, cell.value);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&cell);
  }
  for (const auto& key : order) {
    const auto& group = groups[key];
    for (const auto* c : group) {
      const auto s = stats_of(*c);
      out.push_back({c->method, to_string(c->mode), c->value, std::to_string(c->seed), s.dice_mean, s.dice_sd,
                     s.iou_mean, s.iou_sd, status_of(*c)});
    }
    if (group.size() > 1) {
      const auto [s, status] = average(group);
      out.push_back({std::get<0>(key), to_string(std::get<1>(key)), std::get<2>(key), "mean", s.dice_mean, s.dice_sd,
                     s.iou_mean, s.iou_sd, status});
    }
  }
  return out;
}

std::string table_csv(const std::vector<TableRow>& rows) {
  std::string out = "method,seed,dice_mean,dice_sd,iou_mean,iou_sd,status\n";
  for (const auto& r : rows) {
    out += r.method + "," + r.seed + "," + number(r.dice_mean) + "," + number(r.dice_sd) + "," + number(r.iou_mean) +
           "," + number(r.iou_sd) + "," + r.status + "\n";
  }
  return out;
}

std::vector<TableRow> parse_table_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "method,seed,dice_mean,dice_sd,iou_mean,iou_sd,status") {
    throw FormatError("table: unexpected header '" + line + "'");
  }
  std::vector<TableRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split_row(line, 7, "table");
    rows.push_back({f[0], f[1], parse_number(f[2]), parse_number(f[3]), parse_number(f[4]), parse_number(f[5]), f[6]});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "method,mode,value,seed,dice_mean,dice_sd,iou_mean,iou_sd,status\n";
  for (const auto& r : rows) {
    out += r.method + "," + r.mode + "," + r.value + "," + r.seed + "," + number(r.dice_mean) + "," +
           number(r.dice_sd) + "," + number(r.iou_mean) + "," + number(r.iou_sd) + "," + r.status + "\n";
  }
  return out;
}

std::vector<SweepRow> parse_sweep_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "method,mode,value,seed,dice_mean,dice_sd,iou_mean,iou_sd,status") {
    throw FormatError("sweep table: unexpected header '" + line + "'");
  }
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split_row(line, 9, "sweep table");
    rows.push_back({f[0], f[1], f[2], f[3], parse_number(f[4]), parse_number(f[5]), parse_number(f[6]),
                    parse_number(f[7]), f[8]});
  }
  return rows;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_provenance(const std::filesystem::path& path, const ExperimentResult& result) {
  nlohmann::ordered_json doc;
  doc["command"] = result.command;
  doc["config_hash"] = result.config_hash;
  doc["started_at"] = result.started_at;
  doc["finished_at"] = result.finished_at;
  auto cells = nlohmann::ordered_json::array();
  for (const auto& c : result.cells) {
    nlohmann::ordered_json cell;
    cell["method"] = c.method;
    cell["mode"] = to_string(c.mode);
    cell["value"] = c.value;
    cell["seed"] = c.seed;
    cell["status"] = c.ok() ? "ok" : "error";
    if (!c.ok()) cell["error"] = c.error;
    cell["test_split_hash"] = c.test_split_hash;
    cell["train_slices"] = c.train_slices;
    cell["train_patients"] = c.train_patients;
    cell["best_epoch"] = c.best_epoch;
    cell["epochs_run"] = c.epochs_run;
    cell["run_dir"] = c.run_dir.generic_string();
    cells.push_back(std::move(cell));
  }
  doc["cells"] = std::move(cells);
  atomic_write(path, doc.dump(2) + "\n");
}

}  // namespace atrium::experiments
