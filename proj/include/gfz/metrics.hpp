#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace gfz {

/// Post-sigmoid scores and binary labels, one row per sample, one column per class.
struct PredictionSet {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> scores;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> labels;

  int sample_count() const { return static_cast<int>(scores.rows()); }
  int class_count() const { return static_cast<int>(scores.cols()); }
  std::vector<double> class_scores(int c) const;
  std::vector<std::uint8_t> class_labels(int c) const;
  /// Throws ConfigError on mismatched shapes, scores outside [0,1] or non-binary labels.
  void validate() const;
};

/// Sum over the ranked list of (R_n - R_{n-1}) P_n. Ranking is by descending
/// score with ties kept in input order. nullopt when there are no positives.
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> labels);

struct MeanApResult {
  double mean = 0.0;
  std::vector<std::optional<double>> per_class;
  std::vector<int> skipped_classes;  // no positive labels; excluded from the mean
};

/// Mean of the defined per-class APs. Throws ConfigError when none is defined.
MeanApResult mean_average_precision_detail(const PredictionSet& preds);
double mean_average_precision(const PredictionSet& preds);

struct PrPoint {
  double recall;
  double precision;
};

/// (0, 1) followed by one point per ranked prefix. nullopt when there are no positives.
std::optional<std::vector<PrPoint>> pr_curve(std::span<const double> scores,
                                             std::span<const std::uint8_t> labels);

/// Mann-Whitney statistic with ties counted 1/2. nullopt unless both labels occur.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct MeanAucResult {
  double mean = 0.0;
  std::vector<std::optional<double>> per_class;
  std::vector<int> skipped_classes;
};

/// Mean per-class AUC over classes with both label values. Throws ConfigError when none qualifies.
MeanAucResult mean_roc_auc_detail(const PredictionSet& preds);
double mean_roc_auc(const PredictionSet& preds);

/// (map_t - map_full) / map_full.
double relative_map(double map_t, double map_full);

}  // namespace gfz
