#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cgmvae/dataset.hpp"
#include "cgmvae/errors.hpp"
#include "cgmvae/losses.hpp"
#include "cgmvae/metrics.hpp"
#include "cgmvae/model.hpp"

namespace cgmvae {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  std::size_t epochs = 100;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  double train_fraction = 1.0;
  std::string selection_metric = "example_f1";  ///< evaluated on the validation split
  double threshold = 0.5;
  SplitFractions fractions;

  /// Throws ConfigError on lr <= 0, zero epochs or batch size, wd < 0,
  /// a train fraction outside (0, 1], a threshold outside [0, 1] or an
  /// unknown selection metric.
  void validate() const;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam step at step count t >= 1. Decoupled weight decay
/// (p -= lr·wd·p) is applied before the Adam delta. Throws NumericError naming
/// the parameter if any gradient is non-finite; no parameter is modified then.
void adam_step(ModelParams& params, const std::vector<std::vector<double>>& grads, double lr, double weight_decay,
               std::uint64_t t, const AdamOptions& opt = {});

struct EpochRecord {
  std::size_t epoch = 0;  ///< 1-based
  std::size_t steps = 0;  ///< optimizer steps taken so far
  std::size_t train_rows = 0;
  LossBreakdown train_loss;  ///< row-weighted mean over the epoch's batches
  MetricsReport validation;
  double selection_value = 0.0;
  bool improved = false;
  std::size_t best_epoch = 0;
};

/// Append-only record of one run. Serialized as JSON lines: a "run" header,
/// one "epoch" line per epoch and, once finished, a "result" line.
struct RunLog {
  std::uint64_t seed = 0;
  std::string model_config;  ///< JSON snapshot
  std::string train_config;  ///< JSON snapshot
  std::size_t train_rows = 0;
  std::size_t val_rows = 0;
  std::size_t test_rows = 0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool finished = false;
  bool has_test = false;
  MetricsReport test;

  std::string header_line() const;
  static std::string epoch_line(const EpochRecord& r);
  std::string result_line() const;
  std::string to_jsonl() const;
};

struct TrainResult {
  ModelParams best;
  ModelParams last;
  RunLog log;
};

/// Raised when a non-finite loss or gradient stops training. Carries the
/// best parameters seen so far and the log up to the failure.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& what, ModelParams best, RunLog log)
      : Error(what), best_(std::move(best)), log_(std::move(log)) {}
  const ModelParams& best() const noexcept { return best_; }
  const RunLog& log() const noexcept { return log_; }

 private:
  ModelParams best_;
  RunLog log_;
};

struct TrainHooks {
  /// Once the data is prepared, before the first epoch.
  std::function<void(const RunLog&)> on_start;
  /// After each epoch, with the current parameters, the best so far and the
  /// epoch's wall-clock seconds.
  std::function<void(const EpochRecord&, const ModelParams& current, const ModelParams& best, double seconds)>
      on_epoch;
};

/// Applies split tags (random, unless `ds` already carries them) and the
/// train fraction. Tags are never re-drawn for an already split dataset.
Dataset prepare_dataset(const Dataset& ds, const TrainConfig& config);

/// Runs prepare_dataset, then trains on the Train rows, selecting the epoch
/// with the highest validation metric. When the dataset has test rows the
/// log's final report is computed on the best parameters at checkpoint
/// precision.
TrainResult train(const Dataset& ds, const ModelConfig& model_config, const TrainConfig& config,
                  const TrainHooks& hooks = {});

/// Deterministic predict, threshold and all five metrics on one split.
/// Throws CheckpointError when the parameters do not fit the dataset.
MetricsReport evaluate(const ModelParams& params, const Dataset& ds, Split tag, double threshold = 0.5);

}  // namespace cgmvae
