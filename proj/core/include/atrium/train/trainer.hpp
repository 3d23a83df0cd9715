#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "atrium/common/tensor_archive.hpp"
#include "atrium/models/segmenter.hpp"
#include "atrium/train/dataset.hpp"

namespace atrium::train {

enum class EarlyStopMetric { kValDice, kValLoss };

std::string to_string(EarlyStopMetric metric);
EarlyStopMetric parse_early_stop_metric(std::string_view name);

struct TrainConfig {
  std::string method = "unet";
  double learning_rate = 1e-4;
  std::int64_t batch_size = 24;
  std::int64_t max_epochs = 75;
  std::int64_t patience = 10;
  std::uint64_t seed = 0;
  EarlyStopMetric early_stop_metric = EarlyStopMetric::kValDice;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  /// ViT head: lr 1e-3, batch 32, 35 epochs; CNN baselines: lr 1e-4,
  /// batch 24, 75 epochs. Patience 10 for both.
  static TrainConfig defaults_for(const std::string& architecture);
  void validate() const;
};

/// Patience-based stopping on a scalar validation metric. An epoch counts
/// as an improvement only when it is strictly better than the best so far;
/// NaN never improves.
class EarlyStopping {
 public:
  EarlyStopping(EarlyStopMetric metric, std::int64_t patience);

  /// Records the next epoch's value; returns true when it is a new best.
  bool update(double value);
  bool should_stop() const { return stale_ >= patience_; }
  std::int64_t best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update
  double best_value() const { return best_; }
  std::int64_t epochs() const { return epochs_; }

 private:
  EarlyStopMetric metric_;
  std::int64_t patience_;
  std::int64_t epochs_ = 0;
  std::int64_t best_epoch_ = 0;
  std::int64_t stale_ = 0;
  double best_ = 0.0;
};

struct EpochRecord {
  std::int64_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_dice = 0.0;
};

struct TrainedCheckpoint {
  TensorMap parameters;  // state of Segmenter::checkpoint_module() at best_epoch
  std::int64_t best_epoch = 0;
  double best_val_metric = 0.0;
  EarlyStopMetric early_stop_metric = EarlyStopMetric::kValDice;
  std::vector<EpochRecord> history;
  std::map<std::string, std::string> metadata;  // free-form, round-tripped verbatim
};

struct ValidationResult {
  double loss = 0.0;
  double dice = 0.0;  // pooled over all slices at model resolution, logit >= 0 as foreground
};

/// Loss and Dice over `data` in eval mode without gradients.
ValidationResult validate(models::Segmenter& model, const TensorDataset& data, std::int64_t batch_size);

/// One Adam update on a mini-batch; returns the batch loss. TrainingError
/// when the loss is not finite.
double train_step(models::Segmenter& model, torch::optim::Optimizer& optimizer, const torch::Tensor& features,
                  const torch::Tensor& targets);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam on the model's trainable parameters with per-epoch reshuffled
/// mini-batches (the last, smaller batch is kept) and early stopping. The
/// model is left holding the best epoch's weights. Throws
/// std::invalid_argument for empty data and TrainingError on a non-finite
/// loss.
TrainedCheckpoint fit(models::Segmenter& model, const TensorDataset& train_data, const TensorDataset& val_data,
                      const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Safetensors archive: parameters plus best_epoch, best_val_metric,
/// early_stop_metric and the history as metadata. Written atomically.
void save_checkpoint(const TrainedCheckpoint& checkpoint, const std::filesystem::path& path);
TrainedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// `epoch,train_loss,val_loss,val_dice` rows.
std::string history_csv(const std::vector<EpochRecord>& history);
std::vector<EpochRecord> parse_history_csv(const std::string& text);

}  // namespace atrium::train
