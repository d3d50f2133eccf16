#pragma once

// Gradual freezing: linear-probe pre-conditioning followed by per-layer
// learning-rate modulation from relative gradient norms and progressive
// freezing of the least active layers or blocks.

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gfz/training.hpp"

namespace gfz {

/// Freeze the ceil(ratio * n) lowest-RGN layers among the n freeze-eligible trainable ones.
struct LayerPercent {
  double ratio = 0.4;
};
/// Freeze the block with the lowest importance index.
struct BlockOne {};
/// As BlockOne, with each layer's learning-rate weight replaced by its block mean.
struct BlockOneAveragedLr {};

using FreezePolicy = std::variant<LayerPercent, BlockOne, BlockOneAveragedLr>;

std::string policy_name(const FreezePolicy& policy);  // gfz-l, gfz-b1, gfz-b2
void validate_policy(const FreezePolicy& policy);

struct GfzSettings {
  FreezePolicy policy = LayerPercent{0.4};
  int epsilon_cond = 3;
  int epsilon_step = 1;
  bool classifier_freeze_exempt = true;

  void validate(int patience) const;
};

enum class SchedulerPhase { PreConditioning, GradualFreezing };

struct SchedulerState {
  int epoch = 0;
  SchedulerPhase phase = SchedulerPhase::PreConditioning;
  std::vector<double> rgn;
  std::vector<double> alpha;
  std::vector<std::optional<double>> importance;  // per block; nullopt without trainable layers
  std::vector<int> frozen_set;                      // ascending
  double best_val = 0.0;
  int no_improve = 0;
  int epsilon_cond = 3;
  int epsilon_step = 1;
  int patience = 5;
};

/// Per layer ||g|| / max(||w||, 1e-12) over the concatenated weight and bias,
/// using the gradients currently stored on the parameters. Frozen layers and
/// layers without gradients report 0.
std::vector<double> compute_rgn(const Model& model);

/// r_i / r_max over trainable layers; all ones when r_max is 0; 0 for frozen layers.
std::vector<double> compute_alpha(std::span<const double> rgn, const std::vector<bool>& trainable);

/// effective_lr = alpha * base_lr for trainable layers, 0 for frozen ones.
void update_learning_rates(Model& model, std::span<const double> alpha);

/// Mean RGN over each block's trainable layers.
std::vector<std::optional<double>> compute_importance(std::span<const double> rgn, const BlockPartition& partition,
                                                      const std::vector<bool>& trainable);

/// Each trainable layer's alpha replaced by the mean alpha of the trainable layers in its block.
std::vector<double> block_average_alpha(std::span<const double> alpha, const BlockPartition& partition,
                                        const std::vector<bool>& trainable);

/// Layers to freeze at a freezing step. Ties go to the lowest index. The last
/// remaining eligible group is never selected.
std::vector<int> select_freeze_targets(std::span<const double> rgn, const Model& model, const FreezePolicy& policy,
                                       bool classifier_freeze_exempt = true);

class GfzSchedule final : public Schedule {
 public:
  explicit GfzSchedule(GfzSettings settings, int patience);

  void begin(Model& model) override;
  void before_epoch(int epoch, Model& model) override;
  void after_epoch(int epoch, Model& model, const std::vector<double>& rgn) override;
  std::string phase(int epoch) const override;
  bool early_stop_active(int epoch) const override { return epoch > settings_.epsilon_cond; }
  const std::vector<double>* last_alpha() const override;
  void observe_validation(const EarlyStopping& stopper) override;

  const SchedulerState& state() const { return state_; }

 private:
  GfzSettings settings_;
  SchedulerState state_;
};

RunResult run_gfz(Model model, const TaskData& data, const TrainSettings& settings, const GfzSettings& gfz,
                  const RunHooks& hooks = {});

}  // namespace gfz
