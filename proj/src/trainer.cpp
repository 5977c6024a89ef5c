#include "relx/trainer.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

#include "relx/error.hpp"
#include "relx/optim.hpp"
#include "relx/rng.hpp"

namespace relx {

TrainResult train_minibatches(ParameterStore& store, size_t n_instances, const TrainConfig& cfg,
                              const BatchLossFn& batch_loss, const ValMetricFn& val_metric,
                              const OnBestFn& on_best, std::ostream* log) {
  if (n_instances == 0) throw ConfigError("train_minibatches: empty training set");
  if (cfg.batch_size == 0) throw ConfigError("train_minibatches: batch_size must be positive");

  auto optimizer = make_optimizer(cfg.optimizer, cfg.lr);
  Rng rng(cfg.seed);
  std::vector<size_t> order(n_instances);
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  bool have_best = false;

  for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    size_t n_batches = 0;
    for (size_t start = 0; start < n_instances; start += cfg.batch_size) {
      size_t end = std::min(start + cfg.batch_size, n_instances);
      std::vector<size_t> batch(order.begin() + start, order.begin() + end);
      Tape tape(true, &rng);
      Var loss = batch_loss(tape, batch);
      double value = tape.val(loss)[0];
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(n_batches));
      }
      store.zero_grads();
      tape.backward(loss);
      clip_global_norm(store, cfg.clip_norm);
      optimizer->step(store);
      loss_sum += value;
      ++n_batches;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = loss_sum / static_cast<double>(n_batches);
    if (val_metric) {
      entry.val_metric = val_metric();
      entry.has_val = true;
      if (!have_best || entry.val_metric > result.best_val) {
        have_best = true;
        result.best_val = entry.val_metric;
        result.best_epoch = epoch;
        if (on_best) on_best(epoch);
      }
    }
    if (log) {
      (*log) << "epoch " << epoch << " loss " << entry.mean_loss;
      if (entry.has_val) (*log) << " val " << entry.val_metric;
      (*log) << "\n";
    }
    result.logs.push_back(entry);
  }

  if (!val_metric) {
    result.best_epoch = cfg.epochs;
    if (on_best) on_best(cfg.epochs);
  }
  return result;
}

}  // namespace relx
