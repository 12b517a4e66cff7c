#pragma once

#include <cmath>
#include <vector>

#include "cxr/evalstats/bootstrap.hpp"

namespace cxr::evalstats {

struct DeLongResult {
  double auc_a = 0.0;
  double auc_b = 0.0;
  double z = 0.0;
  double p_two_sided = 1.0;
  double p_one_sided = 1.0;  // H1: AUC_a > AUC_b
};

namespace detail {

// Structural components of one model's AUC (fast midrank formulation).
struct Components {
  double auc = 0.0;
  std::vector<double> v10;  // per positive
  std::vector<double> v01;  // per negative
};

inline Components delong_components(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? pos : neg).push_back(scores[i]);
  const double m = double(pos.size()), n = double(neg.size());
  if (pos.empty() || neg.empty()) throw UndefinedMetricError("DeLong test needs both classes");
  std::vector<double> all = pos;
  all.insert(all.end(), neg.begin(), neg.end());
  const auto rz = midranks(all), rx = midranks(pos), ry = midranks(neg);
  Components c;
  c.v10.resize(pos.size());
  c.v01.resize(neg.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    c.v10[i] = (rz[i] - rx[i]) / n;
    sum += rz[i];
  }
  for (std::size_t j = 0; j < neg.size(); ++j) c.v01[j] = 1.0 - (rz[pos.size() + j] - ry[j]) / m;
  c.auc = (sum - m * (m + 1) / 2.0) / (m * n);
  return c;
}

inline double cov(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t k = x.size();
  if (k < 2) return 0.0;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < k; ++i) mx += x[i], my += y[i];
  mx /= double(k);
  my /= double(k);
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += (x[i] - mx) * (y[i] - my);
  return s / double(k - 1);
}

}  // namespace detail

// DeLong test for two correlated AUCs on the same examples.
inline DeLongResult delong_test(const ScoredSet& a, const ScoredSet& b) {
  detail::require_aligned(a, b, "delong_test");
  const auto ca = detail::delong_components(a.scores, a.labels);
  const auto cb = detail::delong_components(b.scores, b.labels);
  const double m = double(ca.v10.size()), n = double(ca.v01.size());
  const double var = (detail::cov(ca.v10, ca.v10) + detail::cov(cb.v10, cb.v10) - 2 * detail::cov(ca.v10, cb.v10)) / m +
                     (detail::cov(ca.v01, ca.v01) + detail::cov(cb.v01, cb.v01) - 2 * detail::cov(ca.v01, cb.v01)) / n;
  DeLongResult r;
  r.auc_a = ca.auc;
  r.auc_b = cb.auc;
  const double diff = ca.auc - cb.auc;
  if (!(var > 1e-300)) {
    if (diff == 0.0) return r;  // z = 0, p = 1
    r.z = diff > 0 ? INFINITY : -INFINITY;
    r.p_two_sided = 0.0;
    r.p_one_sided = diff > 0 ? 0.0 : 1.0;
    return r;
  }
  r.z = diff / std::sqrt(var);
  r.p_two_sided = std::min(1.0, 2.0 * normal_cdf(-std::abs(r.z)));
  r.p_one_sided = normal_cdf(-r.z);
  return r;
}

}  // namespace cxr::evalstats
