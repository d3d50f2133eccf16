#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gfz/metrics.hpp"
#include "gfz/model.hpp"
#include "gfz/optimizer.hpp"
#include "gfz/synth_data.hpp"

namespace gfz {

struct TrainSettings {
  double base_lr = 1e-4;
  int batch_size = 64;
  int max_epochs = 50;
  int patience = 5;
  bool augment = true;
  int eval_batch_size = 256;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TaskData {
  Dataset train, val, test;
};

/// One completed epoch.
struct MetricsRecord {
  int epoch = 0;
  std::string phase;
  double train_loss = 0.0;
  double val_map = 0.0;
  double val_auc = 0.0;
  std::vector<std::optional<double>> class_ap;
  int trainable_layer_count = 0;
  std::vector<bool> trained;  // per layer: trainable during this epoch
  std::vector<double> rgn;
  std::vector<double> alpha;
  std::vector<double> effective_lr;  // rates in force for the next epoch
  std::uint64_t cumulative_updates = 0;  // parameter elements touched by the optimizer so far
};

/// Strict-improvement early stopping. Epochs only count against patience while active.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);

  /// Returns true when `metric` improves on the best value seen.
  bool update(double metric, bool active);
  bool should_stop() const { return no_improve_ >= patience_; }
  int no_improve() const { return no_improve_; }
  int patience() const { return patience_; }
  double best() const { return best_; }

 private:
  int patience_;
  int no_improve_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
};

/// Hooks through which a fine-tuning strategy drives the shared loop.
class Schedule {
 public:
  virtual ~Schedule() = default;

  /// Called once on the freshly headed model before epoch 1.
  virtual void begin(Model& model) = 0;
  /// Adjust freeze flags and rates for `epoch` (1-based).
  virtual void before_epoch(int /*epoch*/, Model& /*model*/) {}
  /// Called after the epoch's batches; parameter grads hold the epoch-mean gradient.
  virtual void after_epoch(int /*epoch*/, Model& /*model*/, const std::vector<double>& /*rgn*/) {}
  virtual std::string phase(int epoch) const = 0;
  virtual bool early_stop_active(int /*epoch*/) const { return true; }
  /// Extra differentiable loss term, added to the BCE of every batch.
  virtual std::optional<Var<float>> penalty(Model& /*model*/, Tape<float>& /*tape*/) { return std::nullopt; }
  /// Learning-rate weights of the last epoch, when the schedule computes them.
  virtual const std::vector<double>* last_alpha() const { return nullptr; }
  virtual void observe_validation(const EarlyStopping& /*stopper*/) {}
};

struct RunHooks {
  /// Replaces validation mAP as the early-stopping signal.
  std::function<double(int epoch, const Model&)> validation_metric;
  std::function<void(int epoch, const Model&, const MetricsRecord&)> on_epoch_end;
};

struct RunResult {
  std::vector<MetricsRecord> records;
  int best_epoch = 0;
  double best_val_map = 0.0;
  bool early_stopped = false;
  Model model;  // weights of the best epoch
};

/// Sigmoid scores of `model` on every sample of `data`.
PredictionSet predict(Model& model, const Dataset& data, int batch_size = 256);

/// Trains `model` under `schedule` with Adam and multi-label BCE, validating
/// after every epoch and stopping after `patience` active epochs without a
/// strictly better validation metric, or at max_epochs.
RunResult run_schedule(Model model, const TaskData& data, const TrainSettings& settings, Schedule& schedule,
                       const RunHooks& hooks = {});

}  // namespace gfz
