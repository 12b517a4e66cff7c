#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "cxr/evalstats/auc.hpp"

namespace cxr::evalstats {

struct BootstrapOptions {
  std::size_t n_iter = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
  bool group_level = false;  // resample whole groups (patients) instead of examples
  std::size_t max_redraws = 1000;
};

namespace detail {

// Index sample for iteration `iter`. Each iteration (and each redraw within it)
// has its own stream derived from (seed, iter, attempt), so iterations can run
// in any order. Samples lacking a class are redrawn.
class Resampler {
 public:
  Resampler(const ScoredSet& s, const BootstrapOptions& opt) : set_(s), opt_(opt) {
    if (opt.group_level) {
      if (s.groups.empty()) throw ContractError("group-level bootstrap needs group ids");
      std::map<std::string, std::size_t> slot;
      for (std::size_t i = 0; i < s.size(); ++i) {
        auto [it, fresh] = slot.emplace(s.groups[i], members_.size());
        if (fresh) members_.emplace_back();
        members_[it->second].push_back(i);
      }
    }
  }

  std::vector<std::size_t> draw(std::size_t iter) const {
    std::vector<std::size_t> idx;
    std::vector<int> labels;
    for (std::size_t attempt = 0; attempt < opt_.max_redraws; ++attempt) {
      Rng rng = derive_rng(opt_.seed, {iter, attempt});
      idx.clear();
      if (opt_.group_level) {
        std::uniform_int_distribution<std::size_t> pick(0, members_.size() - 1);
        for (std::size_t g = 0; g < members_.size(); ++g) {
          const auto& m = members_[pick(rng)];
          idx.insert(idx.end(), m.begin(), m.end());
        }
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, set_.size() - 1);
        idx.resize(set_.size());
        for (auto& i : idx) i = pick(rng);
      }
      labels.clear();
      for (auto i : idx) labels.push_back(set_.labels[i]);
      if (has_both_classes(labels)) return idx;
    }
    throw UndefinedMetricError("bootstrap: could not draw a resample containing both classes");
  }

 private:
  const ScoredSet& set_;
  BootstrapOptions opt_;
  std::vector<std::vector<std::size_t>> members_;
};

inline double auc_at(const ScoredSet& s, const std::vector<std::size_t>& idx) {
  std::vector<double> sc(idx.size());
  std::vector<int> y(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) sc[k] = s.scores[idx[k]], y[k] = s.labels[idx[k]];
  return roc_auc(sc, y);
}

inline void require_aligned(const ScoredSet& a, const ScoredSet& b, const char* what) {
  a.validate();
  b.validate();
  if (a.size() != b.size()) throw ContractError(std::string(what) + ": sets differ in length");
  if (a.ids != b.ids) throw ContractError(std::string(what) + ": example ids are not aligned");
  if (a.labels != b.labels) throw ContractError(std::string(what) + ": true labels differ between sets");
}

}  // namespace detail

struct ConfidenceInterval {
  double auc = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

// Percentile bootstrap interval. The reported bounds are widened if needed so
// that lo <= auc <= hi.
inline ConfidenceInterval bootstrap_ci(const ScoredSet& s, const BootstrapOptions& opt = {}) {
  s.validate();
  if (!(opt.level > 0.0 && opt.level < 1.0)) throw ContractError("bootstrap_ci: level must lie in (0,1)");
  if (opt.n_iter == 0) throw ContractError("bootstrap_ci: need at least one iteration");
  ConfidenceInterval ci;
  ci.auc = roc_auc(s);
  detail::Resampler rs(s, opt);
  std::vector<double> aucs(opt.n_iter);
  for (std::size_t it = 0; it < opt.n_iter; ++it) aucs[it] = detail::auc_at(s, rs.draw(it));
  const double tail = 0.5 * (1.0 - opt.level);
  ci.lo = std::min(percentile(aucs, tail), ci.auc);
  ci.hi = std::max(percentile(aucs, 1.0 - tail), ci.auc);
  return ci;
}

struct PairedDiff {
  double observed = 0.0;   // AUC_a - AUC_b on the full set
  double mean_diff = 0.0;  // mean over resamples
  double p_value = 1.0;    // one-sided: fraction of resamples with diff <= 0
  bool significant = false;
};

// Paired bootstrap of AUC_a - AUC_b over the shared example set.
inline PairedDiff paired_bootstrap_diff(const ScoredSet& a, const ScoredSet& b, const BootstrapOptions& opt = {},
                                        double alpha = 0.05) {
  detail::require_aligned(a, b, "paired_bootstrap_diff");
  if (opt.n_iter == 0) throw ContractError("paired_bootstrap_diff: need at least one iteration");
  PairedDiff r;
  r.observed = roc_auc(a) - roc_auc(b);
  detail::Resampler rs(a, opt);
  std::size_t not_better = 0;
  double sum = 0.0;
  for (std::size_t it = 0; it < opt.n_iter; ++it) {
    const auto idx = rs.draw(it);
    const double d = detail::auc_at(a, idx) - detail::auc_at(b, idx);
    sum += d;
    if (d <= 0.0) ++not_better;
  }
  r.mean_diff = sum / double(opt.n_iter);
  r.p_value = double(not_better) / double(opt.n_iter);
  r.significant = r.p_value < alpha;
  return r;
}

// Elementwise mean of aligned score sets; labels and ids are kept.
inline ScoredSet score_average(const std::vector<ScoredSet>& sets) {
  if (sets.empty()) throw InvalidInputError("score_average: no sets");
  for (std::size_t k = 1; k < sets.size(); ++k) detail::require_aligned(sets[0], sets[k], "score_average");
  ScoredSet out = sets[0];
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (const auto& set : sets) s += set.scores[i];
    out.scores[i] = s / double(sets.size());
  }
  return out;
}

}  // namespace cxr::evalstats
