#include "atrium/experiments/run.hpp"

#include <fstream>
#include <set>

#include <yaml-cpp/yaml.h>

#include "atrium/common/errors.hpp"
#include "atrium/common/hashing.hpp"
#include "atrium/common/strings.hpp"
#include "atrium/data/corpus.hpp"
#include "atrium/eval/inference.hpp"
#include "atrium/head/seg_head.hpp"

namespace atrium::experiments {

void write_run_config(const std::filesystem::path& file, const RunConfig& config) {
  const auto& m = config.model;
  const auto& t = config.train;
  const auto& p = config.preprocess;
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "method" << YAML::Value << config.method_name;
  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "architecture" << YAML::Value << models::to_string(m.architecture);
  out << YAML::Key << "input_size" << YAML::Value << m.input_size;
  out << YAML::Key << "base_channels" << YAML::Value << m.base_channels;
  out << YAML::Key << "pretrained_encoder" << YAML::Value << m.pretrained_encoder;
  out << YAML::Key << "encoder_checkpoint" << YAML::Value << m.encoder_checkpoint.string();
  out << YAML::Key << "variant" << YAML::Value << m.variant;
  out << YAML::Key << "backbone_checkpoint" << YAML::Value << m.backbone_checkpoint.string();
  out << YAML::Key << "head_channels" << YAML::Value << m.head_channels;
  out << YAML::Key << "tiny_embed_dim" << YAML::Value << m.tiny_embed_dim;
  out << YAML::Key << "tiny_depth" << YAML::Value << m.tiny_depth;
  out << YAML::Key << "tiny_heads" << YAML::Value << m.tiny_heads;
  out << YAML::EndMap;
  out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "lr" << YAML::Value << format_double(t.learning_rate);
  out << YAML::Key << "batch" << YAML::Value << t.batch_size;
  out << YAML::Key << "epochs" << YAML::Value << t.max_epochs;
  out << YAML::Key << "patience" << YAML::Value << t.patience;
  out << YAML::Key << "seed" << YAML::Value << t.seed;
  out << YAML::Key << "early_stop_metric" << YAML::Value << train::to_string(t.early_stop_metric);
  out << YAML::EndMap;
  out << YAML::Key << "preprocess" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "pad_target" << YAML::Value << p.pad_target;
  out << YAML::Key << "crop_oversize" << YAML::Value << p.crop_oversize;
  out << YAML::Key << "vit_normalization" << YAML::Value
      << (p.vit_normalization == data::IntensityNormalization::kPerSliceZScore ? "zscore" : "pretrain");
  out << YAML::EndMap;
  out << YAML::EndMap;
  atomic_write(file, std::string(out.c_str()) + "\n");
}

RunConfig read_run_config(const std::filesystem::path& file) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(file.string());
  } catch (const YAML::BadFile&) {
    throw IoError("cannot read run configuration " + file.string());
  } catch (const YAML::Exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
  try {
    RunConfig config;
    config.method_name = root["method"].as<std::string>();
    const auto m = root["model"];
    config.model.architecture = models::parse_architecture(m["architecture"].as<std::string>());
    config.model.input_size = m["input_size"].as<std::int64_t>();
    config.model.base_channels = m["base_channels"].as<std::int64_t>();
    config.model.pretrained_encoder = m["pretrained_encoder"].as<bool>();
    config.model.encoder_checkpoint = m["encoder_checkpoint"].as<std::string>();
    config.model.variant = m["variant"].as<std::string>();
    config.model.backbone_checkpoint = m["backbone_checkpoint"].as<std::string>();
    config.model.head_channels = m["head_channels"].as<std::int64_t>();
    config.model.tiny_embed_dim = m["tiny_embed_dim"].as<std::int64_t>();
    config.model.tiny_depth = m["tiny_depth"].as<std::int64_t>();
    config.model.tiny_heads = m["tiny_heads"].as<std::int64_t>();
    const auto t = root["train"];
    config.train.method = config.method_name;
    config.train.learning_rate = parse_double(t["lr"].as<std::string>());
    config.train.batch_size = t["batch"].as<std::int64_t>();
    config.train.max_epochs = t["epochs"].as<std::int64_t>();
    config.train.patience = t["patience"].as<std::int64_t>();
    config.train.seed = t["seed"].as<std::uint64_t>();
    config.train.early_stop_metric = train::parse_early_stop_metric(t["early_stop_metric"].as<std::string>());
    const auto p = root["preprocess"];
    config.preprocess.pad_target = p["pad_target"].as<std::int64_t>();
    config.preprocess.crop_oversize = p["crop_oversize"].as<bool>();
    config.preprocess.vit_normalization = p["vit_normalization"].as<std::string>() == "zscore"
                                              ? data::IntensityNormalization::kPerSliceZScore
                                              : data::IntensityNormalization::kPretrainStatistics;
    return config;
  } catch (const YAML::Exception& e) {
    throw FormatError(file.string() + ": incomplete run configuration (" + e.what() + ")");
  }
}

TrainedRun execute_run(const RunConfig& config, models::SegmenterPtr model, const train::TensorDataset& train_data,
                       const train::TensorDataset& val_data, const std::filesystem::path& dir) {
  const RunDir run{dir};
  std::filesystem::create_directories(dir);
  write_run_config(run.config(), config);
  if (auto* vit = dynamic_cast<head::ViTSegmenter*>(model.get()); vit && config.model.backbone_checkpoint.empty()) {
    save_archive(run.backbone(), vit->backbone->to_archive());
  }
  std::ofstream log(run.log());
  auto train_config = config.train;
  train_config.method = config.method_name;
  auto checkpoint = train::fit(*model, train_data, val_data, train_config, [&](const train::EpochRecord& r) {
    log << "epoch " << r.epoch << " train_loss " << format_double(r.train_loss) << " val_loss "
        << format_double(r.val_loss) << " val_dice " << format_double(r.val_dice) << "\n";
    log.flush();
  });
  checkpoint.metadata["method"] = config.method_name;
  checkpoint.metadata["architecture"] = models::to_string(config.model.architecture);
  log << "best_epoch " << checkpoint.best_epoch << " " << train::to_string(checkpoint.early_stop_metric) << " "
      << format_double(checkpoint.best_val_metric) << "\n";
  train::save_checkpoint(checkpoint, run.checkpoint());
  atomic_write(run.history(), train::history_csv(checkpoint.history));
  return {std::move(model), std::move(checkpoint)};
}

models::SegmenterPtr load_run(const std::filesystem::path& dir, RunConfig* config_out) {
  const RunDir run{dir};
  auto config = read_run_config(run.config());
  auto model = models::build_model(config.model, config.train.seed);
  if (auto* vit = dynamic_cast<head::ViTSegmenter*>(model.get());
      vit && config.model.backbone_checkpoint.empty() && std::filesystem::exists(run.backbone())) {
    vit->backbone->load_checkpoint(run.backbone());
  }
  const auto checkpoint = train::load_checkpoint(run.checkpoint());
  load_module_state(model->checkpoint_module(), checkpoint.parameters);
  model->eval();
  if (config_out) *config_out = std::move(config);
  return model;
}

std::vector<data::Volume> load_volumes(const data::Corpus& corpus, const std::vector<std::string>& ids) {
  std::vector<data::Volume> volumes;
  volumes.reserve(ids.size());
  for (const auto& id : ids) volumes.push_back(corpus.load(id));
  return volumes;
}

std::vector<data::SliceSample> collect_slices(const std::vector<data::Volume>& volumes) {
  std::vector<data::SliceSample> slices;
  for (const auto& v : volumes) {
    auto s = data::extract_slices(v);
    slices.insert(slices.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return slices;
}

std::string volumes_hash(const std::vector<data::Volume>& volumes) {
  Fnv1a hash;
  for (const auto& v : volumes) hash.update(v.patient_id()).update(v.voxels()).update(v.labels());
  return hash.hex();
}

void audit_held_out(const data::DatasetSplit& split, const std::vector<std::string>& train_patients,
                    const std::vector<std::string>& val_patients) {
  const std::set<std::string> test(split.test_ids.begin(), split.test_ids.end());
  const std::set<std::string> train_ids(split.train_ids.begin(), split.train_ids.end());
  const std::set<std::string> val_ids(split.val_ids.begin(), split.val_ids.end());
  for (const auto& id : train_patients) {
    if (test.count(id)) throw Error("held-out violation: test patient " + id + " in training data");
    if (!train_ids.count(id)) throw Error("training data contains non-training patient " + id);
  }
  for (const auto& id : val_patients) {
    if (test.count(id)) throw Error("held-out violation: test patient " + id + " in validation data");
    if (!val_ids.count(id)) throw Error("validation data contains non-validation patient " + id);
  }
}

eval::MetricReport evaluate_model(models::Segmenter& model, const std::vector<data::Volume>& volumes,
                                  const train::PreprocessConfig& preprocess, const std::string& method,
                                  const std::optional<std::filesystem::path>& overlays) {
  std::vector<eval::PatientMetrics> rows;
  for (const auto& volume : volumes) {
    auto prediction = eval::predict_volume(model, volume, preprocess);
    rows.push_back(eval::evaluate_patient(prediction, volume));
    if (overlays) eval::write_overlays(volume, prediction, *overlays);
  }
  return eval::aggregate(method, std::move(rows));
}

}  // namespace atrium::experiments
