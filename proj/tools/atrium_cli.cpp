// atrium: phantom generation, splitting, training, evaluation and the two
// experiment drivers from one binary.

#include <algorithm>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "atrium/common/errors.hpp"
#include "atrium/common/strings.hpp"
#include "atrium/data/corpus.hpp"
#include "atrium/data/phantom.hpp"
#include "atrium/data/split.hpp"
#include "atrium/eval/report.hpp"
#include "atrium/experiments/config.hpp"
#include "atrium/experiments/experiment.hpp"
#include "atrium/experiments/run.hpp"
#include "atrium/models/zoo.hpp"
#include "atrium/train/trainer.hpp"

namespace {

using namespace atrium;

std::vector<std::int64_t> parse_dims(const std::string& text) {
  std::vector<std::int64_t> dims;
  std::string lowered = text;
  std::replace(lowered.begin(), lowered.end(), 'X', 'x');
  for (const auto& part : split(lowered, 'x')) dims.push_back(static_cast<std::int64_t>(parse_double(part)));
  if (dims.size() != 3) throw ConfigError("--size expects HxWxS, got '" + text + "'");
  return dims;
}

// Fills options that were not given on the command line from the
// `<subcommand>:` section of --config. Keys are flag names without dashes.
void merge_config(CLI::App& sub, const std::string& config_path) {
  if (config_path.empty()) return;
  for (auto [key, value] : experiments::load_flat_section(config_path, sub.get_name())) {
    std::replace(key.begin(), key.end(), '_', '-');
    auto* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr) throw ConfigError("unknown option '" + key + "' in section '" + sub.get_name() + "'");
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

void require(const CLI::App& sub, std::initializer_list<const char*> names) {
  for (const char* name : names) {
    if (sub.get_option(name)->count() == 0) {
      throw ConfigError(std::string(name) + " is required (command line or config)");
    }
  }
}

struct PhantomArgs {
  std::string out, size = "64x64x8";
  std::int64_t n = 10;
  double noise = 0.05;
  std::uint64_t seed = 0;
};

int run_phantom(const PhantomArgs& a) {
  const auto dims = parse_dims(a.size);
  data::PhantomSpec spec;
  spec.n_volumes = a.n;
  spec.height = dims[0];
  spec.width = dims[1];
  spec.n_slices = dims[2];
  spec.noise_sigma = a.noise;
  spec.seed = a.seed;
  const auto volumes = data::write_phantom(spec, a.out);
  std::cout << "wrote " << volumes.size() << " phantom volumes (" << a.size << ") to " << a.out << "\n";
  return 0;
}

struct SplitArgs {
  std::string data, out, counts, image_glob = "*_image.nii.gz", label_glob = "*_label.nii.gz";
  std::uint64_t seed = 0;
};

int run_split(const SplitArgs& a) {
  const auto corpus = data::Corpus::open(a.data, {a.image_glob, a.label_glob});
  data::DatasetSplit split;
  if (a.counts.empty()) {
    split = data::split_patients(corpus.ids(), a.seed);
  } else {
    const auto parts = atrium::split(a.counts, ',');
    if (parts.size() != 3) throw ConfigError("--counts expects TRAIN,VAL,TEST");
    split = data::split_patients(corpus.ids(), a.seed,
                                 {static_cast<std::size_t>(parse_double(parts[0])),
                                  static_cast<std::size_t>(parse_double(parts[1])),
                                  static_cast<std::size_t>(parse_double(parts[2]))});
  }
  data::write_split_manifest(split, a.out);
  std::cout << "split " << corpus.size() << " patients: " << split.train_ids.size() << " train, "
            << split.val_ids.size() << " val, " << split.test_ids.size() << " test -> " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string method = "unet", variant = "giant", data, split, out;
  std::optional<double> lr;
  std::optional<std::int64_t> batch, epochs, patience;
  std::uint64_t seed = 0;
  std::optional<std::int64_t> input_size;
  std::int64_t base_channels = 64, head_channels = 128, tiny_dim = 64, tiny_depth = 2, tiny_heads = 4;
  std::int64_t pad_target = 0;
  bool pretrained_encoder = false, crop_oversize = false;
  std::string encoder_checkpoint, backbone_checkpoint, vit_normalization = "pretrain", early_stop = "val_dice";
  std::string image_glob = "*_image.nii.gz", label_glob = "*_label.nii.gz";
};

int run_train(const TrainArgs& a) {
  experiments::RunConfig run;
  run.method_name = a.method;
  run.model = models::ModelSpec::defaults(models::parse_architecture(a.method));
  const auto arch = models::to_string(run.model.architecture);
  if (a.input_size) run.model.input_size = *a.input_size;
  run.model.base_channels = a.base_channels;
  run.model.head_channels = a.head_channels;
  run.model.variant = a.variant;
  run.model.tiny_embed_dim = a.tiny_dim;
  run.model.tiny_depth = a.tiny_depth;
  run.model.tiny_heads = a.tiny_heads;
  run.model.pretrained_encoder = a.pretrained_encoder;
  run.model.encoder_checkpoint = a.encoder_checkpoint;
  run.model.backbone_checkpoint = a.backbone_checkpoint;
  run.train = train::TrainConfig::defaults_for(arch);
  run.train.method = a.method;
  if (a.lr) run.train.learning_rate = *a.lr;
  if (a.batch) run.train.batch_size = *a.batch;
  if (a.epochs) run.train.max_epochs = *a.epochs;
  if (a.patience) run.train.patience = *a.patience;
  run.train.seed = a.seed;
  run.train.early_stop_metric = train::parse_early_stop_metric(a.early_stop);
  run.train.validate();
  if (a.vit_normalization != "pretrain" && a.vit_normalization != "zscore") {
    throw ConfigError("--vit-normalization must be pretrain or zscore");
  }

  const auto corpus = data::Corpus::open(a.data, {a.image_glob, a.label_glob});
  const auto split = data::read_split_manifest(a.split);
  run.preprocess.pad_target = a.pad_target > 0 ? a.pad_target : corpus.max_side();
  run.preprocess.crop_oversize = a.crop_oversize;
  run.preprocess.vit_normalization = a.vit_normalization == "zscore" ? data::IntensityNormalization::kPerSliceZScore
                                                                     : data::IntensityNormalization::kPretrainStatistics;

  auto model = models::build_model(run.model, run.train.seed);
  const auto train_slices = experiments::collect_slices(experiments::load_volumes(corpus, split.train_ids));
  const auto val_slices = experiments::collect_slices(experiments::load_volumes(corpus, split.val_ids));
  auto train_data = train::prepare_dataset(*model, train_slices, run.preprocess);
  auto val_data = train::prepare_dataset(*model, val_slices, run.preprocess);
  std::cout << a.method << ": " << train_data.size() << " training / " << val_data.size() << " validation slices, "
            << model->trainable_parameter_count() << " trainable parameters\n";
  auto trained = experiments::execute_run(run, model, train_data, val_data, a.out);
  for (const auto& r : trained.checkpoint.history) {
    std::cout << "epoch " << r.epoch << "  train_loss " << format_double(r.train_loss) << "  val_loss "
              << format_double(r.val_loss) << "  val_dice " << format_double(r.val_dice) << "\n";
  }
  std::cout << "best epoch " << trained.checkpoint.best_epoch << " ("
            << train::to_string(trained.checkpoint.early_stop_metric) << " "
            << format_double(trained.checkpoint.best_val_metric) << ") -> " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string run, data, split, out, overlays;
  std::string image_glob = "*_image.nii.gz", label_glob = "*_label.nii.gz";
};

int run_eval(const EvalArgs& a) {
  experiments::RunConfig config;
  auto model = experiments::load_run(a.run, &config);
  const auto corpus = data::Corpus::open(a.data, {a.image_glob, a.label_glob});
  const auto split = data::read_split_manifest(a.split);
  const auto test = experiments::load_volumes(corpus, split.test_ids);
  std::optional<std::filesystem::path> overlays;
  if (!a.overlays.empty()) overlays = a.overlays;
  const auto report = experiments::evaluate_model(*model, test, config.preprocess, config.method_name, overlays);
  eval::write_report_csv(a.out, report);
  std::cout << config.method_name << " on " << test.size() << " test patients: dice "
            << format_double(report.dice_mean) << " +- " << format_double(report.dice_sd) << ", iou "
            << format_double(report.iou_mean) << " +- " << format_double(report.iou_sd) << " -> " << a.out << "\n";
  return 0;
}

int run_experiment(const std::string& command, const std::string& config_path, const std::string& out) {
  const auto config = experiments::ExperimentConfig::load(config_path);
  const auto result = command == "compare" ? experiments::run_full_comparison(config, out, &std::cerr)
                                           : experiments::run_fewshot(config, out, &std::cerr);
  std::size_t failed = 0;
  for (const auto& c : result.cells) failed += c.ok() ? 0 : 1;
  std::cout << command << ": " << result.cells.size() << " cells (" << failed << " failed), config "
            << result.config_hash << " -> " << out << "\n";
  return failed == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Left-atrium MRI segmentation: phantoms, training, evaluation and experiments"};
  app.require_subcommand(1);
  std::string config_path;
  int threads = 0;
  app.add_option("--config", config_path, "YAML file; the section named after the subcommand supplies defaults")
      ->check(CLI::ExistingFile);
  app.add_option("--threads", threads, "intra-op threads (0: library default)")->check(CLI::NonNegativeNumber);

  PhantomArgs phantom;
  auto* ph = app.add_subcommand("phantom", "write a synthetic phantom corpus");
  ph->add_option("--out", phantom.out, "output directory");
  ph->add_option("--n", phantom.n, "number of volumes");
  ph->add_option("--size", phantom.size, "HxWxS");
  ph->add_option("--noise", phantom.noise, "Gaussian noise sigma");
  ph->add_option("--seed", phantom.seed);

  SplitArgs split_args;
  auto* sp = app.add_subcommand("split", "patient-level train/val/test split");
  sp->add_option("--data", split_args.data, "corpus directory");
  sp->add_option("--seed", split_args.seed);
  sp->add_option("--out", split_args.out, "manifest directory");
  sp->add_option("--counts", split_args.counts, "explicit TRAIN,VAL,TEST sizes (default 70/10/20 %)");
  sp->add_option("--image-glob", split_args.image_glob);
  sp->add_option("--label-glob", split_args.label_glob);

  TrainArgs tr;
  auto* trc = app.add_subcommand("train", "train one model into a run directory");
  trc->add_option("--method", tr.method)->check(CLI::IsMember({"unet", "attention_unet", "res50_unet", "vit_head"}));
  trc->add_option("--variant", tr.variant)->check(CLI::IsMember({"base", "large", "giant", "tiny-test"}));
  trc->add_option("--data", tr.data, "corpus directory");
  trc->add_option("--split", tr.split, "split manifest directory");
  trc->add_option("--out", tr.out, "run directory");
  trc->add_option("--lr", tr.lr);
  trc->add_option("--batch", tr.batch);
  trc->add_option("--epochs", tr.epochs);
  trc->add_option("--patience", tr.patience);
  trc->add_option("--seed", tr.seed);
  trc->add_option("--input-size", tr.input_size, "model input side (default 320 CNN, 448 ViT)");
  trc->add_option("--base-channels", tr.base_channels);
  trc->add_option("--head-channels", tr.head_channels);
  trc->add_option("--tiny-dim", tr.tiny_dim);
  trc->add_option("--tiny-depth", tr.tiny_depth);
  trc->add_option("--tiny-heads", tr.tiny_heads);
  trc->add_option("--pad-target", tr.pad_target, "baseline padding square (0: corpus maximum)");
  trc->add_flag("--crop-oversize", tr.crop_oversize);
  trc->add_flag("--pretrained-encoder", tr.pretrained_encoder);
  trc->add_option("--encoder-checkpoint", tr.encoder_checkpoint);
  trc->add_option("--backbone-checkpoint", tr.backbone_checkpoint);
  trc->add_option("--vit-normalization", tr.vit_normalization, "pretrain | zscore");
  trc->add_option("--early-stop-metric", tr.early_stop, "val_dice | val_loss");
  trc->add_option("--image-glob", tr.image_glob);
  trc->add_option("--label-glob", tr.label_glob);

  EvalArgs ev;
  auto* evc = app.add_subcommand("eval", "evaluate a run directory on the test split");
  evc->add_option("--run", ev.run, "run directory");
  evc->add_option("--data", ev.data, "corpus directory");
  evc->add_option("--split", ev.split, "split manifest directory");
  evc->add_option("--out", ev.out, "report CSV");
  evc->add_option("--overlays", ev.overlays, "directory for <patient>_<slice>.png overlays");
  evc->add_option("--image-glob", ev.image_glob);
  evc->add_option("--label-glob", ev.label_glob);

  std::string fewshot_config, fewshot_out, compare_config, compare_out;
  auto* fs = app.add_subcommand("fewshot", "fraction / patient-count sweeps");
  fs->add_option("--config", fewshot_config, "experiment YAML")->required()->check(CLI::ExistingFile);
  fs->add_option("--out", fewshot_out, "output directory")->required();
  auto* cmp = app.add_subcommand("compare", "full-data comparison of all configured methods");
  cmp->add_option("--config", compare_config, "experiment YAML")->required()->check(CLI::ExistingFile);
  cmp->add_option("--out", compare_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (threads > 0) torch::set_num_threads(threads);
    if (ph->parsed()) {
      merge_config(*ph, config_path);
      require(*ph, {"--out"});
      return run_phantom(phantom);
    }
    if (sp->parsed()) {
      merge_config(*sp, config_path);
      require(*sp, {"--data", "--out"});
      return run_split(split_args);
    }
    if (trc->parsed()) {
      merge_config(*trc, config_path);
      require(*trc, {"--data", "--split", "--out"});
      return run_train(tr);
    }
    if (evc->parsed()) {
      merge_config(*evc, config_path);
      require(*evc, {"--run", "--data", "--split", "--out"});
      return run_eval(ev);
    }
    if (fs->parsed()) return run_experiment("fewshot", fewshot_config, fewshot_out);
    if (cmp->parsed()) return run_experiment("compare", compare_config, compare_out);
  } catch (const atrium::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
