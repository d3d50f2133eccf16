#pragma once

// Batch experiment driver behind the gfz command line tool.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gfz/config.hpp"
#include "gfz/metrics.hpp"
#include "gfz/training.hpp"

namespace gfz {

/// Generates the dataset and cuts it into train / val / test subsets.
TaskData make_task(const DatasetSpec& spec, const std::array<double, 3>& split);

/// Parallel run cap from GFZ_THREADS (default 1).
int thread_budget();

/// Calls job(i) for i in [0, n) on up to `threads` workers and rethrows the first failure.
void parallel_for(int n, int threads, const std::function<void(int)>& job);

struct PretrainOutcome {
  Model model;
  RunResult run;
  double val_map = 0.0;
  double prior_map = 0.0;  // mAP of scoring every sample with the training prevalence
};

PretrainOutcome pretrain(const ExperimentConfig& cfg, std::ostream& log);
PretrainOutcome cmd_pretrain(const ExperimentConfig& cfg, const std::filesystem::path& out_path, std::ostream& log);

struct SeedRun {
  std::uint64_t seed = 0;
  RunResult run;
  double test_map = 0.0;
  double test_auc = 0.0;
  std::vector<std::optional<std::vector<PrPoint>>> test_pr;  // per class
  std::vector<int> skipped_classes;                          // classes without positives in val or test
};

struct FinetuneSummary {
  std::string strategy;
  std::vector<SeedRun> runs;
  double mean_val_map = 0.0, std_val_map = 0.0;
  double mean_test_map = 0.0, std_test_map = 0.0;
};

/// Fine-tunes a fresh-headed copy of `pretrained` once per seed under `strategy`.
FinetuneSummary finetune(const ExperimentConfig& cfg, const Model& pretrained, const TaskData& task,
                         const std::string& strategy, const std::vector<std::uint64_t>& seeds, int threads);

/// Throws ConfigError when the checkpoint does not match the configured architecture.
void check_architecture(const ExperimentConfig& cfg, const Model& pretrained);

/// Per-epoch metrics table of one run.
std::string epochs_csv(const RunResult& run);
/// Rows are epochs, columns layers; 1 where the layer was trained.
std::string heatmap_csv(const RunResult& run);
std::string pr_curve_csv(const SeedRun& run);
std::string summary_json(const FinetuneSummary& summary);

/// Writes epochs_seed<N>.csv, heatmap_seed<N>.csv, pr_curve_seed<N>.csv and summary.json into out_dir.
void write_finetune_outputs(const FinetuneSummary& summary, const std::filesystem::path& out_dir);

FinetuneSummary cmd_finetune(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                             const std::filesystem::path& out_dir, std::ostream& log);

enum class SweepAxis { EpsilonCond, EpsilonStep, FreezeRatio };

SweepAxis parse_sweep_axis(const std::string& name);  // epsilon_cond, epsilon_step, freeze_ratio
std::string sweep_axis_name(SweepAxis axis);
std::vector<double> default_sweep_values(SweepAxis axis);

struct SweepRow {
  double value = 0.0;
  FinetuneSummary summary;
};

/// Config for one grid point; throws ConfigError for points that violate constraints.
ExperimentConfig sweep_point(const ExperimentConfig& cfg, SweepAxis axis, double value);
std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows);

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, SweepAxis axis,
                                const std::vector<double>& values, const std::filesystem::path& out_dir,
                                std::ostream& log);

struct ReportRow {
  std::string strategy;
  double mean_val_map = 0.0, std_val_map = 0.0;
  std::optional<double> relative;  // against the full-fine-tuning run, when present
};

/// Reads <run_dir>/<strategy>/summary.json and heatmap files; writes <run_dir>/report/.
std::vector<ReportRow> cmd_report(const std::filesystem::path& run_dir, std::ostream& log);

/// Layers x epochs matrix, transposed from a heatmap CSV.
std::vector<std::vector<int>> read_heatmap_matrix(const std::filesystem::path& heatmap_csv, std::vector<std::string>* layer_names);
std::string heatmap_svg(const std::vector<std::vector<int>>& matrix, const std::vector<std::string>& layer_names);

}  // namespace gfz
