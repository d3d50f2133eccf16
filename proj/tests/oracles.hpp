#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "gfz/rng.hpp"

namespace gfz::testing {

struct Ranking {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
};

// Scores on a coarse grid half the time so ties occur.
inline Ranking random_ranking(Rng& rng, int n) {
  Ranking r;
  const bool coarse = rng.bernoulli(0.5);
  const double p = rng.uniform(0.05, 0.95);
  for (int i = 0; i < n; ++i) {
    double s = rng.uniform();
    if (coarse) s = std::floor(s * 8.0) / 8.0;
    r.scores.push_back(s);
    r.labels.push_back(rng.bernoulli(p) ? 1 : 0);
  }
  return r;
}

// Mean of precision@k over the ranks k holding a positive.
inline std::optional<double> oracle_ap(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  std::vector<int> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return s[a] != s[b] ? s[a] > s[b] : a < b; });
  double sum = 0.0;
  int positives = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (!y[idx[k]]) continue;
    ++positives;
    int hits = 0;
    for (std::size_t j = 0; j <= k; ++j) hits += y[idx[j]];
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (positives == 0) return std::nullopt;
  return sum / positives;
}

// Fraction of (positive, negative) pairs ordered correctly, ties counting one half.
inline std::optional<double> oracle_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!y[i] || y[j]) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  if (pairs == 0) return std::nullopt;
  return wins / static_cast<double>(pairs);
}

}  // namespace gfz::testing
