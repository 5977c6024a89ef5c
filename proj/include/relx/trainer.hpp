#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "relx/params.hpp"
#include "relx/tape.hpp"

namespace relx {

struct TrainConfig {
  std::string optimizer = "adagrad";
  double lr = 0.01;
  size_t batch_size = 32;
  size_t epochs = 10;
  uint64_t seed = 1;
  double clip_norm = 5.0;
};

struct EpochLog {
  size_t epoch = 0;       // 1-based
  double mean_loss = 0.0;  // mean of batch losses
  double val_metric = 0.0;
  bool has_val = false;
};

struct TrainResult {
  std::vector<EpochLog> logs;
  size_t best_epoch = 0;  // 1-based; last epoch when no validation metric
  double best_val = 0.0;
};

// Builds the mean loss over the given instance indices on the tape.
using BatchLossFn = std::function<Var(Tape&, const std::vector<size_t>&)>;
using ValMetricFn = std::function<double()>;
using OnBestFn = std::function<void(size_t epoch)>;

// Seeded minibatch SGD driver: one shuffle per epoch, gradient clipping to
// cfg.clip_norm, one optimizer step per batch. The tape handed to batch_loss
// is in training mode with the trainer's RNG as dropout source, so dropout
// masks are part of the deterministic draw sequence. A non-finite batch loss
// aborts with a TrainingError naming the epoch and batch. When val_metric is
// given, on_best fires on strict improvement; otherwise on_best fires once
// after the final epoch.
TrainResult train_minibatches(ParameterStore& store, size_t n_instances, const TrainConfig& cfg,
                              const BatchLossFn& batch_loss, const ValMetricFn& val_metric = {},
                              const OnBestFn& on_best = {}, std::ostream* log = nullptr);

}  // namespace relx
