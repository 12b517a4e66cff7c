#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "cxr/common/error.hpp"
#include "cxr/common/rng.hpp"

namespace cxr::evalstats {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;            // 0 or 1
  std::vector<std::string> ids;       // aligned across models for paired tests
  std::vector<std::string> groups;    // optional cluster key (patient) for grouped bootstrap

  std::size_t size() const { return scores.size(); }

  void validate() const {
    if (labels.size() != scores.size()) throw ContractError("scored set: scores and labels differ in length");
    if (!ids.empty() && ids.size() != scores.size()) throw ContractError("scored set: ids misaligned");
    if (!groups.empty() && groups.size() != scores.size()) throw ContractError("scored set: groups misaligned");
    for (int y : labels)
      if (y != 0 && y != 1) throw ContractError("scored set: labels must be 0 or 1");
  }
};

// 1-based ranks with ties sharing their average rank.
inline std::vector<double> midranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    const double mid = 0.5 * double(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) r[order[k]] = mid;
    i = j;
  }
  return r;
}

// Mann-Whitney form: P(score_pos > score_neg) + 0.5 P(tie), via one sort.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ContractError("roc_auc: scores and labels differ in length");
  std::size_t n1 = 0;
  for (int y : labels) n1 += y == 1;
  const std::size_t n0 = labels.size() - n1;
  if (n1 == 0 || n0 == 0)
    throw UndefinedMetricError("AUC undefined: need at least one positive and one negative (got " +
                               std::to_string(n1) + " positive, " + std::to_string(n0) + " negative)");
  for (double s : scores)
    if (std::isnan(s)) throw NumericError("roc_auc: NaN score");
  const auto r = midranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i)
    if (labels[i] == 1) rank_sum += r[i];
  return (rank_sum - 0.5 * double(n1) * double(n1 + 1)) / (double(n1) * double(n0));
}

inline double roc_auc(const ScoredSet& s) { return roc_auc(s.scores, s.labels); }

inline bool has_both_classes(const std::vector<int>& labels) {
  bool pos = false, neg = false;
  for (int y : labels) (y ? pos : neg) = true;
  return pos && neg;
}

// Linear interpolation between order statistics (q in [0,1]).
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw InvalidInputError("percentile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * double(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace cxr::evalstats
