#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "atrium/data/corpus.hpp"
#include "atrium/data/split.hpp"
#include "atrium/models/zoo.hpp"
#include "atrium/train/dataset.hpp"
#include "atrium/train/trainer.hpp"

namespace atrium::experiments {

/// One row of a comparison: a named model plus its training settings.
struct MethodConfig {
  std::string name;
  models::ModelSpec model;
  train::TrainConfig train;
};

struct DataConfig {
  std::filesystem::path root;
  data::CorpusPatterns patterns;
  std::int64_t pad_target = 0;  // 0: the corpus' largest in-plane side
  bool crop_oversize = false;
  data::IntensityNormalization vit_normalization = data::IntensityNormalization::kPretrainStatistics;
};

struct SplitConfig {
  std::uint64_t seed = 0;
  std::optional<data::SplitCounts> counts;  // default 70 / 10 / 20
  std::filesystem::path manifest;           // existing split directory; overrides seed/counts
};

enum class SweepMode { kFull, kFractionSweep, kPatientSweep };

std::string to_string(SweepMode mode);
SweepMode parse_sweep_mode(std::string_view text);

/// Parsed experiment file. YAML layout:
///
///   data:       {root, image_glob, label_glob, pad_target, crop_oversize, vit_normalization}
///   split:      {seed, counts: [train, val, test], manifest}
///   methods:    [{name, architecture, variant, input_size, base_channels, head_channels,
///                 pretrained_encoder, encoder_checkpoint, backbone_checkpoint,
///                 tiny: {embed_dim, depth, heads},
///                 train: {lr, batch, epochs, patience, early_stop_metric}}]
///   experiment: {seeds, fractions, patients (integers or "all"), fewshot_max_epochs, overlays}
///
/// Relative paths resolve against the file's directory.
struct ExperimentConfig {
  DataConfig data;
  SplitConfig split;
  std::vector<MethodConfig> methods;
  std::vector<std::uint64_t> seeds{0};
  std::vector<double> fractions{0.01, 0.05, 0.1, 0.25, 0.5, 1.0};
  std::vector<std::int64_t> patients{1, 10, 0};  // 0 stands for all training patients
  std::int64_t fewshot_max_epochs = 10;
  bool overlays = false;

  static ExperimentConfig from_yaml(const std::string& text, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Throws ConfigError for an empty method list, duplicate method names,
  /// no seeds, fractions outside (0, 1] or negative patient counts.
  void validate() const;

  /// Deterministic text rendering of every field; its hash identifies the run.
  std::string canonical() const;
  std::string hash() const;
};

/// The `<section>:` mapping of a YAML file as flat key -> scalar strings
/// (lists are joined with commas). Missing section: empty.
std::vector<std::pair<std::string, std::string>> load_flat_section(const std::filesystem::path& path,
                                                                    const std::string& section);

}  // namespace atrium::experiments
