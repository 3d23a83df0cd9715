#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "atrium/data/corpus.hpp"
#include "atrium/data/split.hpp"
#include "atrium/data/volume.hpp"
#include "atrium/eval/report.hpp"
#include "atrium/models/zoo.hpp"
#include "atrium/train/dataset.hpp"
#include "atrium/train/trainer.hpp"

namespace atrium::experiments {

/// Everything needed to rebuild a trained model from its run directory.
struct RunConfig {
  std::string method_name;
  models::ModelSpec model;
  train::TrainConfig train;
  train::PreprocessConfig preprocess;
};

void write_run_config(const std::filesystem::path& file, const RunConfig& config);
RunConfig read_run_config(const std::filesystem::path& file);

/// runs/<name>/ layout.
struct RunDir {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.yaml"; }
  std::filesystem::path history() const { return root / "history.csv"; }
  std::filesystem::path checkpoint() const { return root / "best.ckpt"; }
  std::filesystem::path backbone() const { return root / "backbone.safetensors"; }
  std::filesystem::path log() const { return root / "train.log"; }
};

struct TrainedRun {
  models::SegmenterPtr model;
  train::TrainedCheckpoint checkpoint;
};

/// Trains `model` (built from config.model) and writes the run directory:
/// config.yaml, history.csv, best.ckpt, train.log and, for a ViT model
/// without a backbone checkpoint, backbone.safetensors.
TrainedRun execute_run(const RunConfig& config, models::SegmenterPtr model, const train::TensorDataset& train_data,
                       const train::TensorDataset& val_data, const std::filesystem::path& dir);

/// Rebuilds the model stored in a run directory with its best weights.
models::SegmenterPtr load_run(const std::filesystem::path& dir, RunConfig* config = nullptr);

std::vector<data::Volume> load_volumes(const data::Corpus& corpus, const std::vector<std::string>& ids);
std::vector<data::SliceSample> collect_slices(const std::vector<data::Volume>& volumes);

/// Hash of the ids, voxels and labels of `volumes` in order.
std::string volumes_hash(const std::vector<data::Volume>& volumes);

/// Throws Error when any training or validation patient is a test patient
/// or outside its partition.
void audit_held_out(const data::DatasetSplit& split, const std::vector<std::string>& train_patients,
                    const std::vector<std::string>& val_patients);

/// Per-patient volumetric metrics over `volumes`, optionally writing overlays.
eval::MetricReport evaluate_model(models::Segmenter& model, const std::vector<data::Volume>& volumes,
                                  const train::PreprocessConfig& preprocess, const std::string& method,
                                  const std::optional<std::filesystem::path>& overlays = std::nullopt);

}  // namespace atrium::experiments
