#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "gfz/baselines.hpp"
#include "gfz/scheduler.hpp"
#include "gfz/synth_data.hpp"
#include "gfz/training.hpp"

namespace gfz {

/// Everything a pretrain / finetune / sweep invocation needs. Loaded from a
/// flat `key = value` file; keys are listed in README.md.
struct ExperimentConfig {
  std::string strategy = "gfz-l";
  int epsilon_cond = 3;
  int epsilon_step = 1;
  double freeze_ratio = 0.4;
  bool classifier_freeze_exempt = true;

  TrainSettings train;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<int> widths{8, 16, 32};

  int lp_epochs = 3;
  int unfreeze_step = 1;
  double sp_a = 0.1;
  double sp_b = 0.01;

  int pretrain_epochs = 20;
  double pretrain_lr = 1e-3;
  std::uint64_t pretrain_seed = 7;

  DatasetSpec source = DatasetSpec::source_default();
  DatasetSpec target = DatasetSpec::target_default();
  std::array<double, 3> split{0.6, 0.2, 0.2};

  void validate() const;
};

/// Throws ConfigError naming the line for malformed lines, unknown keys and bad values.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

const std::vector<std::string>& strategy_names();
bool is_gfz_strategy(const std::string& name);

/// GFz settings for a gfz-* strategy name, taking ratio and epsilons from the config.
GfzSettings gfz_settings(const ExperimentConfig& cfg, const std::string& name);
/// Baseline spec for any other strategy name.
StrategySpec baseline_spec(const ExperimentConfig& cfg, const std::string& name);

}  // namespace gfz
