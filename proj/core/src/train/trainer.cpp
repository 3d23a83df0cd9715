#include "atrium/train/trainer.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <c10/util/StringUtil.h>

#include "atrium/common/errors.hpp"
#include "atrium/common/random.hpp"
#include "atrium/common/strings.hpp"
#include "atrium/train/loss.hpp"

namespace atrium::train {

std::string to_string(EarlyStopMetric metric) {
  return metric == EarlyStopMetric::kValDice ? "val_dice" : "val_loss";
}

EarlyStopMetric parse_early_stop_metric(std::string_view name) {
  if (name == "val_dice") return EarlyStopMetric::kValDice;
  if (name == "val_loss") return EarlyStopMetric::kValLoss;
  throw ConfigError("early_stop_metric must be val_dice or val_loss, got '" + std::string(name) + "'");
}

TrainConfig TrainConfig::defaults_for(const std::string& architecture) {
  TrainConfig config;
  config.method = architecture;
  if (architecture == "vit_head") {
    config.learning_rate = 1e-3;
    config.batch_size = 32;
    config.max_epochs = 35;
  }
  return config;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError(c10::str("learning_rate must be > 0, got ", learning_rate));
  }
  if (batch_size < 1) throw ConfigError(c10::str("batch_size must be >= 1, got ", batch_size));
  if (max_epochs < 1) throw ConfigError(c10::str("max_epochs must be >= 1, got ", max_epochs));
  if (patience < 1) throw ConfigError(c10::str("patience must be >= 1, got ", patience));
}

EarlyStopping::EarlyStopping(EarlyStopMetric metric, std::int64_t patience)
    : metric_(metric), patience_(patience) {
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
}

bool EarlyStopping::update(double value) {
  ++epochs_;
  const bool better = best_epoch_ == 0
                          ? !std::isnan(value)
                          : (metric_ == EarlyStopMetric::kValDice ? value > best_ : value < best_);
  if (better) {
    best_ = value;
    best_epoch_ = epochs_;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return better;
}

ValidationResult validate(models::Segmenter& model, const TensorDataset& data, std::int64_t batch_size) {
  if (data.size() == 0) throw std::invalid_argument("validation set is empty");
  const bool was_training = model.is_training();
  model.eval();
  torch::NoGradGuard no_grad;
  double loss_sum = 0.0;
  std::int64_t intersection = 0, predicted = 0, truth = 0;
  for (std::int64_t start = 0; start < data.size(); start += batch_size) {
    const auto n = std::min(batch_size, data.size() - start);
    auto features = data.features.narrow(0, start, n);
    auto targets = data.targets.narrow(0, start, n);
    auto logits = model.trainable_forward(features);
    loss_sum += bce_with_logits(logits, targets).item<double>() * static_cast<double>(n);
    auto pred = logits >= 0;
    auto gt = targets > 0.5;
    intersection += torch::logical_and(pred, gt).sum().item<std::int64_t>();
    predicted += pred.sum().item<std::int64_t>();
    truth += gt.sum().item<std::int64_t>();
  }
  model.train(was_training);
  ValidationResult result;
  result.loss = loss_sum / static_cast<double>(data.size());
  result.dice = predicted + truth == 0 ? 1.0
                                       : 2.0 * static_cast<double>(intersection) /
                                             static_cast<double>(predicted + truth);
  return result;
}

double train_step(models::Segmenter& model, torch::optim::Optimizer& optimizer, const torch::Tensor& features,
                  const torch::Tensor& targets) {
  optimizer.zero_grad();
  auto loss = bce_with_logits(model.trainable_forward(features), targets);
  const double value = loss.item<double>();
  if (!std::isfinite(value)) throw TrainingError(c10::str("non-finite training loss ", value));
  loss.backward();
  optimizer.step();
  return value;
}

TrainedCheckpoint fit(models::Segmenter& model, const TensorDataset& train_data, const TensorDataset& val_data,
                      const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_data.size() == 0) throw std::invalid_argument("training set is empty");
  if (val_data.size() == 0) throw std::invalid_argument("validation set is empty");
  torch::manual_seed(config.seed);

  auto parameters = model.trainable_parameters();
  if (parameters.empty()) throw TrainingError("model has no trainable parameters");
  torch::optim::Adam optimizer(parameters, torch::optim::AdamOptions(config.learning_rate)
                                               .betas({config.adam_beta1, config.adam_beta2})
                                               .eps(config.adam_eps)
                                               .weight_decay(0.0));

  EarlyStopping stopper(config.early_stop_metric, config.patience);
  TrainedCheckpoint result;
  result.early_stop_metric = config.early_stop_metric;
  const auto n = train_data.size();
  for (std::int64_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    model.train();
    const auto order = seeded_permutation(static_cast<std::size_t>(n), mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    for (std::int64_t start = 0; start < n; start += config.batch_size) {
      const auto stop = std::min(n, start + config.batch_size);
      std::vector<std::int64_t> rows;
      for (auto i = start; i < stop; ++i) rows.push_back(static_cast<std::int64_t>(order[static_cast<std::size_t>(i)]));
      auto index = torch::tensor(rows, torch::kInt64);
      try {
        loss_sum += train_step(model, optimizer, train_data.features.index_select(0, index),
                               train_data.targets.index_select(0, index)) *
                    static_cast<double>(rows.size());
      } catch (const TrainingError& e) {
        throw TrainingError(c10::str(config.method, ": epoch ", epoch, ", batch starting at ", start, ": ", e.what()));
      }
    }
    const auto val = validate(model, val_data, config.batch_size);
    EpochRecord record{epoch, loss_sum / static_cast<double>(n), val.loss, val.dice};
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);

    const double metric = config.early_stop_metric == EarlyStopMetric::kValDice ? val.dice : val.loss;
    if (stopper.update(metric)) result.parameters = clone_state(model.checkpoint_module());
    if (stopper.should_stop()) break;
  }
  if (stopper.best_epoch() == 0) throw TrainingError(config.method + ": validation metric was never finite");
  result.best_epoch = stopper.best_epoch();
  result.best_val_metric = stopper.best_value();
  load_module_state(model.checkpoint_module(), result.parameters);
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_loss,val_dice\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," + format_double(r.val_loss) + "," +
           format_double(r.val_dice) + "\n";
  }
  return out;
}

std::vector<EpochRecord> parse_history_csv(const std::string& text) {
  std::vector<EpochRecord> history;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "epoch,train_loss,val_loss,val_dice") {
    throw FormatError("history: unexpected header '" + line + "'");
  }
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split(trim(line), ',');
    if (fields.size() != 4) throw FormatError("history: malformed row '" + line + "'");
    EpochRecord r;
    r.epoch = static_cast<std::int64_t>(parse_double(fields[0]));
    r.train_loss = parse_double(fields[1]);
    r.val_loss = parse_double(fields[2]);
    r.val_dice = parse_double(fields[3]);
    history.push_back(r);
  }
  return history;
}

namespace {
constexpr const char* kMetaPrefix = "meta.";
}

void save_checkpoint(const TrainedCheckpoint& checkpoint, const std::filesystem::path& path) {
  TensorArchive archive;
  archive.tensors = checkpoint.parameters;
  archive.metadata["best_epoch"] = std::to_string(checkpoint.best_epoch);
  archive.metadata["best_val_metric"] = format_double(checkpoint.best_val_metric);
  archive.metadata["early_stop_metric"] = to_string(checkpoint.early_stop_metric);
  archive.metadata["history"] = history_csv(checkpoint.history);
  for (const auto& [key, value] : checkpoint.metadata) archive.metadata[kMetaPrefix + key] = value;
  save_archive(path, archive);
}

TrainedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  auto archive = load_archive(path);
  auto field = [&](const std::string& key) -> const std::string& {
    auto it = archive.metadata.find(key);
    if (it == archive.metadata.end()) throw FormatError("checkpoint " + path.string() + " lacks '" + key + "'");
    return it->second;
  };
  TrainedCheckpoint checkpoint;
  checkpoint.parameters = std::move(archive.tensors);
  checkpoint.best_epoch = static_cast<std::int64_t>(parse_double(field("best_epoch")));
  checkpoint.best_val_metric = parse_double(field("best_val_metric"));
  checkpoint.early_stop_metric = parse_early_stop_metric(field("early_stop_metric"));
  checkpoint.history = parse_history_csv(field("history"));
  const std::string prefix = kMetaPrefix;
  for (const auto& [key, value] : archive.metadata) {
    if (key.rfind(prefix, 0) == 0) checkpoint.metadata[key.substr(prefix.size())] = value;
  }
  return checkpoint;
}

}  // namespace atrium::train
