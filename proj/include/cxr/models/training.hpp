#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cxr/autodiff/loss.hpp"
#include "cxr/autodiff/optim.hpp"
#include "cxr/evalstats/auc.hpp"
#include "cxr/models/labels.hpp"
#include "cxr/nn/layers.hpp"

namespace cxr::models {

struct EpochRecord {
  double lr = 0.0;
  double train_loss = 0.0;
  double val_auc = std::numeric_limits<double>::quiet_NaN();       // selection label
  double val_mean_auc = std::numeric_limits<double>::quiet_NaN();  // over labels with both classes
};

struct History {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_auc = std::numeric_limits<double>::quiet_NaN();
};

// AUC per label over unmasked examples; NaN where a label lacks a class.
inline std::vector<double> per_label_auc(const std::vector<std::vector<float>>& scores,
                                         const std::vector<std::vector<float>>& labels,
                                         const std::vector<std::vector<float>>& mask, std::size_t n_labels) {
  std::vector<double> out(n_labels, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t l = 0; l < n_labels; ++l) {
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (mask[i][l] != 0.f) s.push_back(scores[i][l]), y.push_back(labels[i][l] != 0.f);
    if (evalstats::has_both_classes(y)) out[l] = evalstats::roc_auc(s, y);
  }
  return out;
}

inline double nan_mean(const std::vector<double>& v) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v)
    if (!std::isnan(x)) s += x, ++n;
  return n ? s / double(n) : std::numeric_limits<double>::quiet_NaN();
}

// Score used for model selection: the selection label, or the mean over
// defined labels when that label has a single class in the split.
inline double selection_score(const EpochRecord& r) { return std::isnan(r.val_auc) ? r.val_mean_auc : r.val_auc; }

template <typename T>
ad::Tensor<T> stack_rows(const std::vector<const std::vector<float>*>& rows, std::size_t width) {
  std::vector<T> data;
  data.reserve(rows.size() * width);
  for (const auto* r : rows) {
    if (r->size() != width) throw DimensionError("label vector width does not match the layout");
    for (float v : *r) data.push_back(T(v));
  }
  return ad::Tensor<T>({rows.size(), width}, std::move(data));
}

// Full copy of a module's values, for keeping the best epoch.
template <typename T, class M>
std::vector<std::vector<T>> snapshot(M& m) {
  std::vector<std::vector<T>> out;
  m.visit("", [&](const std::string&, ad::Tensor<T>& t, nn::StateKind) {
    out.emplace_back(t.data().begin(), t.data().end());
  });
  return out;
}

template <typename T, class M>
void restore(M& m, const std::vector<std::vector<T>>& snap) {
  std::size_t i = 0;
  m.visit("", [&](const std::string&, ad::Tensor<T>& t, nn::StateKind) {
    std::copy(snap.at(i).begin(), snap.at(i).end(), t.data().begin());
    ++i;
  });
}

inline std::vector<float> sigmoid_row(std::span<const float> z) {
  std::vector<float> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = ad::stable_sigmoid(z[i]);
  return p;
}

}  // namespace cxr::models
