// End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
// the process exits non-zero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "atrium/common/errors.hpp"
#include "atrium/common/strings.hpp"
#include "atrium/common/tensor_archive.hpp"
#include "atrium/data/phantom.hpp"
#include "atrium/data/split.hpp"
#include "atrium/eval/metrics.hpp"
#include "atrium/eval/morphology.hpp"
#include "atrium/eval/overlay.hpp"
#include "atrium/eval/report.hpp"
#include "atrium/experiments/experiment.hpp"
#include "atrium/experiments/plots.hpp"
#include "atrium/head/seg_head.hpp"
#include "atrium/models/zoo.hpp"
#include "atrium/train/dataset.hpp"
#include "atrium/train/loss.hpp"
#include "atrium/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace atrium;

namespace {

using Clock = std::chrono::steady_clock;

// Collects the failed checks of one criterion; details go to stderr.
class Check {
 public:
  explicit Check(int id) : id_(id) {}
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      ++failures_;
      std::cerr << "  [" << id_ << "] " << what << "\n";
    }
  }
  void note(const std::string& text) { notes_ += (notes_.empty() ? "" : "; ") + text; }
  bool ok() const { return failures_ == 0; }
  const std::string& notes() const { return notes_; }

 private:
  int id_;
  int failures_ = 0;
  std::string notes_;
};

std::string fixed(double v, int digits = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename F>
bool throws(F&& f) {
  try {
    f();
  } catch (const std::exception&) {
    return true;
  }
  return false;
}

std::vector<data::SliceSample> phantom_slices(std::int64_t volumes, std::int64_t side, std::int64_t slices,
                                              std::uint64_t seed) {
  data::PhantomSpec spec;
  spec.n_volumes = volumes;
  spec.height = spec.width = side;
  spec.n_slices = slices;
  spec.seed = seed;
  std::vector<data::SliceSample> out;
  for (const auto& v : data::generate_phantom(spec)) {
    auto s = data::extract_slices(v);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

// Picks foreground-heavy slices so every training batch has both classes.
std::vector<data::SliceSample> busiest(std::vector<data::SliceSample> slices, std::size_t n) {
  std::stable_sort(slices.begin(), slices.end(), [](const auto& a, const auto& b) {
    return a.mask.sum().template item<std::int64_t>() > b.mask.sum().template item<std::int64_t>();
  });
  slices.resize(std::min(n, slices.size()));
  return slices;
}

models::ModelSpec tiny_vit(std::int64_t input_size, std::int64_t head_channels) {
  auto spec = models::ModelSpec::defaults(models::Architecture::kViTHead);
  spec.variant = "tiny-test";
  spec.input_size = input_size;
  spec.head_channels = head_channels;
  return spec;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(ATRIUM_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---------------------------------------------------------------------------

void metric_oracle(Check& c) {
  std::mt19937 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::bernoulli_distribution coin(0.05 + 0.9 * (trial % 20) / 20.0);
    auto a = torch::zeros({16, 16}, torch::kUInt8), b = torch::zeros({16, 16}, torch::kUInt8);
    auto pa = a.accessor<std::uint8_t, 2>(), pb = b.accessor<std::uint8_t, 2>();
    long na = 0, nb = 0, both = 0, either = 0;
    for (int i = 0; i < 16; ++i) {
      for (int j = 0; j < 16; ++j) {
        pa[i][j] = coin(rng);
        pb[i][j] = coin(rng);
        na += pa[i][j];
        nb += pb[i][j];
        both += pa[i][j] & pb[i][j];
        either += pa[i][j] | pb[i][j];
      }
    }
    const double d = na + nb == 0 ? 1.0 : 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
    const double j = either == 0 ? 1.0 : static_cast<double>(both) / static_cast<double>(either);
    worst = std::max({worst, std::abs(eval::dice(a, b) - d), std::abs(eval::iou(a, b) - j)});
    const auto o = eval::overlap(a, b);
    // iou = dice / (2 - dice) with dice = 2I/(A+B): I/U == 2I / (2(A+B) - 2I), cross-multiplied.
    const auto u = o.union_size();
    c.expect(2 * o.intersection * u == o.intersection * (2 * (o.a + o.b) - 2 * o.intersection),
             "iou identity fails in exact arithmetic for trial " + std::to_string(trial));
  }
  c.expect(worst <= 1e-9, "max abs error " + std::to_string(worst));
  c.note("max abs error " + format_double(worst));
}

void patchify_round_trip(Check& c) {
  auto image = torch::rand({3, 448, 448});
  auto patches = vit::patchify(image);
  c.expect(patches.size(0) == 1024, "patch count " + std::to_string(patches.size(0)));
  c.expect(patches.size(2) == 14 && patches.size(3) == 14, "patch side");
  const float err = vit::untile(patches, 32, 32).sub(image).abs().max().item<float>();
  c.expect(err == 0.0f, "reassembly error " + std::to_string(err));
  c.expect(throws([] { vit::patchify(torch::rand({3, 450, 450})); }), "450x450 accepted");
  c.expect(throws([] { vit::patchify(torch::rand({3, 448, 440})); }), "448x440 accepted");
}

void frozen_backbone_audit(Check& c) {
  auto model = std::dynamic_pointer_cast<head::ViTSegmenter>(models::build_model(tiny_vit(448, 32), 0));
  auto backbone_before = clone_state(*model->backbone);
  auto head_before = clone_state(*model->head);

  train::PreprocessConfig pre;
  pre.vit_normalization = data::IntensityNormalization::kPerSliceZScore;
  auto slices = busiest(phantom_slices(2, 64, 8, 5), 4);
  std::vector<torch::Tensor> images, masks;
  for (const auto& s : slices) {
    auto p = train::prepare_slice(*model, s, pre);
    images.push_back(p.image);
    masks.push_back(p.mask.unsqueeze(0).to(torch::kFloat32));
  }
  auto x = torch::stack(images), y = torch::stack(masks);

  torch::optim::Adam opt(model->trainable_parameters(), torch::optim::AdamOptions(1e-3));
  model->train();
  for (int step = 0; step < 5; ++step) {
    opt.zero_grad();
    // Full forward pass, so gradients could reach the backbone if it were not frozen.
    auto loss = train::bce_with_logits(model->forward(x), y);
    loss.backward();
    for (const auto& p : model->backbone->parameters()) {
      c.expect(!p.grad().defined() || p.grad().abs().max().item<float>() == 0.0f, "backbone gradient is non-zero");
    }
    opt.step();
  }
  std::int64_t unchanged = 0;
  for (const auto& [name, t] : module_state(*model->backbone)) {
    const bool same = torch::equal(t, backbone_before.at(name));
    unchanged += same;
    c.expect(same, "backbone tensor changed: " + name);
  }
  std::int64_t changed = 0;
  for (const auto& [name, t] : module_state(*model->head)) changed += !torch::equal(t, head_before.at(name));
  c.expect(changed >= 1, "no head parameter changed");
  std::int64_t head_count = 0;
  for (const auto& p : model->head->parameters()) head_count += p.numel();
  c.expect(model->trainable_parameter_count() == head_count, "trainable count != head count");
  c.note(std::to_string(unchanged) + " backbone tensors unchanged, " + std::to_string(changed) +
         " head tensors changed, trainable " + std::to_string(head_count));
}

void gradient_correctness(Check& c) {
  // Loss gradient: sigma(l) - y against central differences of the loss itself.
  auto l = torch::linspace(-12.0, 12.0, 49, torch::kFloat64);
  double worst_loss = 0.0;
  for (double y : {0.0, 1.0}) {
    auto logits = l.clone().requires_grad_();
    auto targets = torch::full_like(l, y);
    train::bce_with_logits(logits, targets).backward();
    const double n = static_cast<double>(l.numel());
    for (std::int64_t i = 0; i < l.numel(); ++i) {
      const double h = 1e-6;
      auto plus = l.clone(), minus = l.clone();
      plus[i] += h;
      minus[i] -= h;
      const double fd = (train::bce_with_logits(plus, targets).item<double>() -
                         train::bce_with_logits(minus, targets).item<double>()) / (2 * h) * n;
      const double analytic = logits.grad()[i].item<double>() * n;
      const double sig = 1.0 / (1.0 + std::exp(-l[i].item<double>()));
      worst_loss = std::max({worst_loss, std::abs(analytic - fd), std::abs(analytic - (sig - y))});
    }
  }
  c.expect(worst_loss <= 1e-6, "loss gradient error " + std::to_string(worst_loss));

  // Full tiny model in double precision: analytic vs central differences.
  auto model = models::build_model(tiny_vit(56, 16), 3);
  model->to(torch::kFloat64);
  model->eval();
  torch::manual_seed(7);
  auto x = torch::randn({2, 3, 56, 56}, torch::kFloat64);
  auto y = (torch::rand({2, 1, 56, 56}) > 0.5).to(torch::kFloat64);
  auto loss_of = [&] { return train::bce_with_logits(model->forward(x), y); };
  auto params = model->trainable_parameters();
  for (auto& p : params) p.mutable_grad() = torch::Tensor();
  loss_of().backward();

  std::mt19937 rng(11);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    auto& p = params[std::uniform_int_distribution<std::size_t>(0, params.size() - 1)(rng)];
    const auto idx = std::uniform_int_distribution<std::int64_t>(0, p.numel() - 1)(rng);
    auto flat = p.view({-1});
    const double analytic = p.grad().view({-1})[idx].item<double>();
    const double h = 1e-5;
    double fd = 0.0;
    {
      torch::NoGradGuard guard;
      const double orig = flat[idx].item<double>();
      flat[idx] = orig + h;
      const double up = loss_of().item<double>();
      flat[idx] = orig - h;
      const double down = loss_of().item<double>();
      flat[idx] = orig;
      fd = (up - down) / (2 * h);
    }
    const double rel = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-7});
    worst = std::max(worst, rel);
  }
  c.expect(worst <= 1e-3, "model gradient relative error " + std::to_string(worst));
  c.note("loss grad err " + format_double(worst_loss) + ", model rel err " + format_double(worst));
}

double overfit_baseline(models::Architecture arch, Check& c) {
  auto spec = models::ModelSpec::defaults(arch);
  spec.input_size = 64;
  spec.base_channels = 16;
  auto model = models::build_model(spec, 0);
  train::PreprocessConfig pre;
  pre.pad_target = 64;
  auto slice = busiest(phantom_slices(1, 64, 8, 9), 1);
  auto data = train::prepare_dataset(*model, slice, pre);
  torch::optim::Adam opt(model->trainable_parameters(), torch::optim::AdamOptions(1e-3));
  double best = 0.0;
  for (int step = 1; step <= 300; ++step) {
    model->train();
    train::train_step(*model, opt, data.features, data.targets);
    if (step % 10 == 0) {
      best = train::validate(*model, data, 1).dice;
      if (best >= 0.99) break;
    }
  }
  c.expect(best >= 0.99, models::to_string(arch) + " reached Dice " + std::to_string(best));
  return best;
}

void loss_descent(Check& c) {
  auto model = models::build_model(tiny_vit(448, 32), 0);
  train::PreprocessConfig pre;
  pre.vit_normalization = data::IntensityNormalization::kPerSliceZScore;
  auto batch = train::prepare_dataset(*model, busiest(phantom_slices(2, 64, 8, 1), 4), pre);
  torch::optim::Adam opt(model->trainable_parameters(), torch::optim::AdamOptions(1e-3));
  model->train();
  const double first = train::validate(*model, batch, 4).loss;
  for (int step = 0; step < 200; ++step) train::train_step(*model, opt, batch.features, batch.targets);
  const double last = train::validate(*model, batch, 4).loss;
  c.expect(last <= 0.5 * first, "BCE " + std::to_string(first) + " -> " + std::to_string(last));
  std::string note = "vit BCE " + fixed(first) + " -> " + fixed(last);
  for (auto arch : {models::Architecture::kUNet, models::Architecture::kAttentionUNet,
                    models::Architecture::kRes50UNet}) {
    note += ", " + models::to_string(arch) + " Dice " + fixed(overfit_baseline(arch, c));
  }
  c.note(note);
}

const char* kMethodsYaml = R"(methods:
  - {name: unet, architecture: unet, input_size: 64, base_channels: 8%UNET_TRAIN%}
  - {name: vit_head, architecture: vit_head, variant: tiny-test, input_size: 448, head_channels: 32%VIT_TRAIN%}
)";

std::string experiment_yaml(const fs::path& corpus, const std::string& extra_train, const std::string& experiment) {
  std::string methods = kMethodsYaml;
  for (const char* key : {"%UNET_TRAIN%", "%VIT_TRAIN%"}) {
    methods.replace(methods.find(key), std::string(key).size(), extra_train);
  }
  return "data: {root: " + corpus.string() + ", vit_normalization: zscore}\n" +
         "split: {seed: 0, counts: [40, 5, 10]}\n" + methods + "experiment: " + experiment + "\n";
}

fs::path ensure_corpus(const fs::path& work, Check& c) {
  const auto corpus = work / "phantom";
  if (!fs::exists(corpus / "phantom_054_label.nii.gz")) {
    const int rc = run_cli("phantom --out " + corpus.string() + " --n 55 --size 64x64x8 --seed 0", work / "phantom.log");
    c.expect(rc == 0, "phantom command exited with " + std::to_string(rc));
  }
  return corpus;
}

void end_to_end(const fs::path& work, Check& c) {
  const auto corpus = ensure_corpus(work, c);
  const auto config = work / "compare.yaml";
  std::ofstream(config) << experiment_yaml(corpus, "", "{seeds: [0]}");
  const auto out = work / "compare";
  fs::remove_all(out);
  const int rc = run_cli("compare --config " + config.string() + " --out " + out.string(), work / "compare.log");
  c.expect(rc == 0, "compare exited with " + std::to_string(rc) + " (see " + (work / "compare.log").string() + ")");
  if (!fs::exists(out / "table1.csv")) {
    c.expect(false, "table1.csv missing");
    return;
  }
  std::string note;
  std::set<std::string> seen;
  for (const auto& row : experiments::parse_table_csv(experiments::read_text(out / "table1.csv"))) {
    seen.insert(row.method);
    c.expect(row.status == "ok", row.method + " status " + row.status);
    c.expect(row.dice_mean >= 0.70, row.method + " test Dice " + std::to_string(row.dice_mean));
    note += (note.empty() ? "" : ", ") + row.method + " Dice " + fixed(row.dice_mean);
  }
  c.expect(seen == std::set<std::string>{"unet", "vit_head"}, "methods in table1.csv");
  c.note(note);
}

void fewshot_integrity(const fs::path& work, Check& c) {
  const auto corpus = ensure_corpus(work, c);
  // Both drivers get the same 10-epoch budget, so the fraction-1.0 cell and
  // the full run train identically.
  const auto config = work / "fewshot.yaml";
  std::ofstream(config) << experiment_yaml(corpus, ", train: {epochs: 10}",
                                           "{seeds: [0], fractions: [0.1, 1.0], patients: [1, all], "
                                           "fewshot_max_epochs: 10}");
  const auto sweep = work / "fewshot", full = work / "fewshot_full";
  fs::remove_all(sweep);
  fs::remove_all(full);
  int rc = run_cli("fewshot --config " + config.string() + " --out " + sweep.string(), work / "fewshot.log");
  c.expect(rc == 0, "fewshot exited with " + std::to_string(rc));
  rc = run_cli("compare --config " + config.string() + " --out " + full.string(), work / "fewshot_full.log");
  c.expect(rc == 0, "compare exited with " + std::to_string(rc));
  if (!fs::exists(sweep / "fewshot.csv") || !fs::exists(full / "table1.csv")) {
    c.expect(false, "fewshot.csv or table1.csv missing");
    return;
  }

  const auto rows = experiments::parse_sweep_csv(experiments::read_text(sweep / "fewshot.csv"));
  const auto table = experiments::parse_table_csv(experiments::read_text(full / "table1.csv"));
  auto find = [&](const std::string& method, const std::string& mode, const std::string& value) {
    for (const auto& r : rows) {
      if (r.method == method && r.mode == mode && r.value == value && r.seed == "0") return r;
    }
    c.expect(false, "no sweep row for " + method + " " + mode + " " + value);
    return experiments::SweepRow{};
  };
  std::string note;
  for (const auto& t : table) {
    const auto at_full = find(t.method, "fraction_sweep", "1");
    const auto at_tenth = find(t.method, "fraction_sweep", "0.1");
    c.expect(at_full.status == "ok" && at_tenth.status == "ok", t.method + " sweep cell failed");
    c.expect(at_full.dice_mean == t.dice_mean && at_full.dice_sd == t.dice_sd && at_full.iou_mean == t.iou_mean &&
                 at_full.iou_sd == t.iou_sd,
             t.method + ": fraction 1.0 metrics differ from the full run");
    const auto a = load_archive(sweep / "runs" / t.method / "fraction_sweep_1" / "seed_0" / "best.ckpt");
    const auto b = load_archive(full / "runs" / t.method / "seed_0" / "best.ckpt");
    bool same = a.tensors.size() == b.tensors.size();
    for (const auto& [name, tensor] : a.tensors) same = same && b.tensors.count(name) && torch::equal(tensor, b.tensors.at(name));
    c.expect(same, t.method + ": fraction 1.0 checkpoint differs from the full run");
    c.expect(at_full.dice_mean >= at_tenth.dice_mean - 0.02,
             t.method + ": Dice at full data " + std::to_string(at_full.dice_mean) + " < Dice at 10% " +
                 std::to_string(at_tenth.dice_mean) + " - 0.02");
    note += (note.empty() ? "" : ", ") + t.method + " 10% " + fixed(at_tenth.dice_mean) + " -> 100% " +
            fixed(at_full.dice_mean);
  }

  std::set<std::string> hashes;
  for (const auto* dir : {&sweep, &full}) {
    const auto doc = nlohmann::json::parse(experiments::read_text(*dir / "provenance.json"));
    for (const auto& cell : doc.at("cells")) {
      c.expect(cell.at("status") == "ok", "cell " + cell.at("method").get<std::string>() + " " +
                                               cell.at("value").get<std::string>() + " failed");
      hashes.insert(cell.at("test_split_hash").get<std::string>());
    }
  }
  c.expect(hashes.size() == 1, std::to_string(hashes.size()) + " distinct test-split hashes");
  c.note(note);
}

void morphology_suite(Check& c) {
  auto speck = torch::zeros({9, 9}, torch::kUInt8);
  speck[4][4] = 1;
  c.expect(eval::morph_open(speck).sum().item<int>() == 0, "opening kept an isolated pixel");
  auto holed = torch::ones({9, 9}, torch::kUInt8);
  holed[4][4] = 0;
  c.expect(eval::morph_close(holed).eq(1).all().item<bool>(), "closing left a single-pixel hole");
  torch::manual_seed(21);
  auto within = [](const torch::Tensor& a, const torch::Tensor& b) {
    return (a.to(torch::kBool) & ~b.to(torch::kBool)).sum().item<std::int64_t>() == 0;
  };
  for (int trial = 0; trial < 50; ++trial) {
    auto m = (torch::rand({32, 32}) > (0.15 + 0.7 * trial / 50.0)).to(torch::kUInt8);
    auto o = eval::morph_open(m), cl = eval::morph_close(m);
    c.expect(within(o, m), "open(m) not within m, trial " + std::to_string(trial));
    c.expect(within(m, cl), "m not within close(m), trial " + std::to_string(trial));
    c.expect(torch::equal(eval::morph_open(o), o), "opening not idempotent, trial " + std::to_string(trial));
    c.expect(torch::equal(eval::morph_close(cl), cl), "closing not idempotent, trial " + std::to_string(trial));
  }
}

void split_determinism(Check& c) {
  std::vector<std::string> ids;
  for (int i = 0; i < 130; ++i) ids.push_back("patient_" + std::to_string(i));
  auto a = data::split_patients(ids, 42), b = data::split_patients(ids, 42);
  c.expect(a.train_ids.size() == 91 && a.val_ids.size() == 13 && a.test_ids.size() == 26,
           "sizes " + std::to_string(a.train_ids.size()) + "/" + std::to_string(a.val_ids.size()) + "/" +
               std::to_string(a.test_ids.size()));
  std::set<std::string> all;
  for (const auto* part : {&a.train_ids, &a.val_ids, &a.test_ids}) all.insert(part->begin(), part->end());
  c.expect(all.size() == 130, "partitions overlap or miss ids");
  c.expect(a.train_ids == b.train_ids && a.val_ids == b.val_ids && a.test_ids == b.test_ids,
           "repeated call differs");
}

void reporting_round_trip(Check& c) {
  experiments::ExperimentResult result;
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.3, 0.95);
  auto make_report = [&](const std::string& method) {
    std::vector<eval::PatientMetrics> rows;
    for (int p = 0; p < 26; ++p) {
      const double d = u(rng);
      rows.push_back({"patient_" + std::to_string(p), d, d / (2 - d)});
    }
    return eval::aggregate(method, rows);
  };
  for (const char* method : {"unet", "attention_unet", "res50_unet", "vit_head"}) {
    for (std::uint64_t seed : {0u, 1u}) {
      experiments::CellResult cell;
      cell.method = method;
      cell.seed = seed;
      cell.value = "1";
      cell.report = make_report(method);
      result.cells.push_back(cell);
      for (double f : {0.01, 0.1, 1.0}) {
        cell.mode = experiments::SweepMode::kFractionSweep;
        cell.x = f;
        cell.value = format_double(f);
        cell.report = make_report(method);
        result.cells.push_back(cell);
        cell.mode = experiments::SweepMode::kFull;
      }
    }
  }
  const auto table = experiments::table_rows(result);
  c.expect(experiments::parse_table_csv(experiments::table_csv(table)) == table, "table CSV round trip");
  const auto sweep = experiments::sweep_rows(result);
  c.expect(experiments::parse_sweep_csv(experiments::sweep_csv(sweep)) == sweep, "sweep CSV round trip");
  for (const auto& plot : experiments::plot_data(result)) {
    const auto back = experiments::parse_plot_csv(experiments::plot_csv(plot), plot.mode);
    bool same = back.series.size() == plot.series.size();
    for (std::size_t i = 0; same && i < back.series.size(); ++i) {
      same = back.series[i].method == plot.series[i].method && back.series[i].x == plot.series[i].x &&
             back.series[i].mean == plot.series[i].mean && back.series[i].sd == plot.series[i].sd;
    }
    c.expect(same, "plot CSV round trip");
  }
  const auto& report = *result.cells.front().report;
  const auto parsed = eval::parse_report_csv(eval::report_csv(report));
  bool same = parsed.per_patient.size() == report.per_patient.size() && parsed.dice_mean == report.dice_mean &&
              parsed.dice_sd == report.dice_sd && parsed.iou_mean == report.iou_mean && parsed.iou_sd == report.iou_sd;
  for (std::size_t i = 0; same && i < parsed.per_patient.size(); ++i) {
    same = parsed.per_patient[i].patient_id == report.per_patient[i].patient_id &&
           parsed.per_patient[i].dice == report.per_patient[i].dice &&
           parsed.per_patient[i].iou == report.per_patient[i].iou;
  }
  c.expect(same, "per-patient report CSV round trip");

  // Overlay: a 12x12 prediction square against a 10x10 truth square offset by (4, 4).
  auto image = torch::rand({32, 32});
  auto pred = torch::zeros({32, 32}, torch::kUInt8), gt = torch::zeros({32, 32}, torch::kUInt8);
  pred.narrow(0, 4, 12).narrow(1, 4, 12).fill_(1);
  gt.narrow(0, 8, 10).narrow(1, 8, 10).fill_(1);
  const auto tints = eval::count_tints(eval::render_overlay(image, pred, gt));
  // Overlap is rows/cols 8..15 (8x8); pred-only 144 - 64; truth-only 100 - 64.
  c.expect(tints.yellow == 64, "yellow " + std::to_string(tints.yellow));
  c.expect(tints.green == 80, "green " + std::to_string(tints.green));
  c.expect(tints.red == 36, "red " + std::to_string(tints.red));
}

struct Criterion {
  int id;
  const char* title;
  double budget_s;
  std::function<void(Check&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work_dir = (fs::temp_directory_path() / "atrium_acceptance").string();
  std::vector<int> only;
  app.add_option("--work", work_dir, "scratch directory (phantom corpus and experiment outputs)");
  app.add_option("--only", only, "criterion numbers to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  const fs::path work = work_dir;
  fs::create_directories(work);

  const std::vector<Criterion> criteria{
      {1, "metric oracle equivalence", 1, metric_oracle},
      {2, "patchify round trip", 1, patchify_round_trip},
      {3, "frozen-backbone audit", 30, frozen_backbone_audit},
      {4, "gradient correctness", 60, gradient_correctness},
      {5, "loss descent / capacity", 300, loss_descent},
      {6, "end-to-end phantom run", 900, [&](Check& c) { end_to_end(work, c); }},
      {7, "few-shot protocol integrity", 1200, [&](Check& c) { fewshot_integrity(work, c); }},
      {8, "morphology definitional suite", 1, morphology_suite},
      {9, "split determinism", 1, split_determinism},
      {10, "reporting round trip", 0, reporting_round_trip},
  };

  int failed = 0;
  for (const auto& criterion : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), criterion.id) == only.end()) continue;
    Check check(criterion.id);
    const auto start = Clock::now();
    try {
      criterion.run(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    const double elapsed = seconds_since(start);
    if (criterion.budget_s > 0 && elapsed > criterion.budget_s) {
      check.expect(false, "runtime " + fixed(elapsed, 1) + " s exceeds " + fixed(criterion.budget_s, 0) + " s");
    }
    failed += !check.ok();
    std::cout << (check.ok() ? "PASS" : "FAIL") << "  " << std::setw(2) << criterion.id << "  " << criterion.title
              << "  (" << fixed(elapsed, 2) << " s)" << (check.notes().empty() ? "" : "  " + check.notes()) << "\n"
              << std::flush;
  }
  return failed == 0 ? 0 : 1;
}
