#include "gfz/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "gfz/error.hpp"

namespace gfz {
namespace {

void check_lengths(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size())
    throw ConfigError("metrics: " + std::to_string(scores.size()) + " scores vs " +
                      std::to_string(labels.size()) + " labels");
}

std::vector<std::size_t> rank_descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::size_t count_positives(std::span<const std::uint8_t> labels) {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto v) { return v != 0; }));
}

}  // namespace

std::vector<double> PredictionSet::class_scores(int c) const {
  std::vector<double> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) out[i] = scores(i, c);
  return out;
}

std::vector<std::uint8_t> PredictionSet::class_labels(int c) const {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(labels.rows()));
  for (Eigen::Index i = 0; i < labels.rows(); ++i) out[i] = labels(i, c);
  return out;
}

void PredictionSet::validate() const {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols())
    throw ConfigError("prediction set: scores and labels differ in shape");
  if ((scores.array() < 0.0).any() || (scores.array() > 1.0).any())
    throw ConfigError("prediction set: scores must lie in [0,1]");
  if ((labels.array() > std::uint8_t{1}).any()) throw ConfigError("prediction set: labels must be 0 or 1");
}

std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> labels) {
  check_lengths(scores, labels);
  const std::size_t positives = count_positives(labels);
  if (positives == 0) return std::nullopt;
  const double total = static_cast<double>(positives);
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, n = 0;
  for (std::size_t idx : rank_descending(scores)) {
    ++n;
    if (labels[idx]) ++tp;
    const double recall = static_cast<double>(tp) / total;
    const double precision = static_cast<double>(tp) / static_cast<double>(n);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

MeanApResult mean_average_precision_detail(const PredictionSet& preds) {
  preds.validate();
  MeanApResult r;
  double acc = 0.0;
  int defined = 0;
  for (int c = 0; c < preds.class_count(); ++c) {
    const auto s = preds.class_scores(c);
    const auto l = preds.class_labels(c);
    auto ap = average_precision(s, l);
    r.per_class.push_back(ap);
    if (ap) {
      acc += *ap;
      ++defined;
    } else {
      r.skipped_classes.push_back(c);
    }
  }
  if (defined == 0) throw ConfigError("mean_average_precision: no class has a positive label");
  r.mean = acc / defined;
  return r;
}

double mean_average_precision(const PredictionSet& preds) {
  return mean_average_precision_detail(preds).mean;
}

std::optional<std::vector<PrPoint>> pr_curve(std::span<const double> scores,
                                             std::span<const std::uint8_t> labels) {
  check_lengths(scores, labels);
  const std::size_t positives = count_positives(labels);
  if (positives == 0) return std::nullopt;
  std::vector<PrPoint> points{{0.0, 1.0}};
  std::size_t tp = 0, n = 0;
  for (std::size_t idx : rank_descending(scores)) {
    ++n;
    if (labels[idx]) ++tp;
    points.push_back({static_cast<double>(tp) / static_cast<double>(positives),
                      static_cast<double>(tp) / static_cast<double>(n)});
  }
  return points;
}

std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores, labels);
  const std::size_t positives = count_positives(labels);
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;

  // Rank-sum form; tied groups share their average rank.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) positive_rank_sum += avg_rank;
    i = j;
  }
  const double p = static_cast<double>(positives), q = static_cast<double>(negatives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * q);
}

MeanAucResult mean_roc_auc_detail(const PredictionSet& preds) {
  preds.validate();
  MeanAucResult r;
  double acc = 0.0;
  int defined = 0;
  for (int c = 0; c < preds.class_count(); ++c) {
    const auto s = preds.class_scores(c);
    const auto l = preds.class_labels(c);
    auto auc = roc_auc(s, l);
    r.per_class.push_back(auc);
    if (auc) {
      acc += *auc;
      ++defined;
    } else {
      r.skipped_classes.push_back(c);
    }
  }
  if (defined == 0) throw ConfigError("mean_roc_auc: no class has both positive and negative labels");
  r.mean = acc / defined;
  return r;
}

double mean_roc_auc(const PredictionSet& preds) { return mean_roc_auc_detail(preds).mean; }

double relative_map(double map_t, double map_full) {
  if (!(map_full > 0.0)) throw ConfigError("relative_map: reference mAP must be > 0");
  return (map_t - map_full) / map_full;
}

}  // namespace gfz
