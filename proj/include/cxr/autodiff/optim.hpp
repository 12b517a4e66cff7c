#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "cxr/autodiff/tensor.hpp"

namespace cxr::ad {

enum class OptimizerKind { sgd_momentum, adam };

inline const char* to_string(OptimizerKind k) {
  return k == OptimizerKind::adam ? "adam" : "sgd_momentum";
}

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd" || s == "sgd_momentum") return OptimizerKind::sgd_momentum;
  throw ContractError("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd_momentum;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment buffers are created on the first step and are aligned with the
// parameter list passed to optimizer_step; the same list must be passed every
// time.
template <typename T>
struct OptimizerState {
  OptimizerConfig config;
  std::vector<std::vector<T>> first;   // SGD velocity or Adam m
  std::vector<std::vector<T>> second;  // Adam v
  long step = 0;

  explicit OptimizerState(OptimizerConfig c = {}) : config(c) {}
};

// SGD:  v <- mu*v + g + wd*p ;  p <- p - lr*v
// Adam: g' = g + wd*p, bias-corrected first/second moments.
template <typename T>
void optimizer_step(std::vector<Tensor<T>>& params, OptimizerState<T>& state) {
  auto& cfg = state.config;
  if (state.first.empty()) {
    for (const auto& p : params) {
      state.first.emplace_back(p.numel(), T(0));
      if (cfg.kind == OptimizerKind::adam) state.second.emplace_back(p.numel(), T(0));
    }
  }
  if (state.first.size() != params.size())
    throw ContractError("optimizer_step: parameter list changed between steps");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].has_grad())
      throw ContractError("optimizer_step: parameter " + std::to_string(k) + " has no gradient");
    if (state.first[k].size() != params[k].numel())
      throw ContractError("optimizer_step: moment buffer shape mismatch");
  }
  ++state.step;
  const T lr = T(cfg.lr), wd = T(cfg.weight_decay);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].data();
    auto g = params[k].grad();
    auto& m = state.first[k];
    if (cfg.kind == OptimizerKind::sgd_momentum) {
      const T mu = T(cfg.momentum);
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (!std::isfinite(g[i])) throw NumericError("optimizer_step: non-finite gradient");
        m[i] = mu * m[i] + g[i] + wd * p[i];
        p[i] -= lr * m[i];
      }
    } else {
      auto& v = state.second[k];
      const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
      const T c1 = T(1) - T(std::pow(cfg.beta1, double(state.step)));
      const T c2 = T(1) - T(std::pow(cfg.beta2, double(state.step)));
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (!std::isfinite(g[i])) throw NumericError("optimizer_step: non-finite gradient");
        const T gi = g[i] + wd * p[i];
        m[i] = b1 * m[i] + (T(1) - b1) * gi;
        v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
        p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + T(cfg.eps));
      }
    }
  }
}

template <typename T>
void zero_grad(std::vector<Tensor<T>>& params) {
  for (auto& p : params) p.zero_grad();
}

inline double cosine_annealing_lr(long step, long total_steps, double lr_max, double lr_min = 0.0) {
  if (total_steps <= 0) throw ContractError("cosine_annealing_lr: total_steps must be positive");
  if (step < 0 || step > total_steps)
    throw ContractError("cosine_annealing_lr: step " + std::to_string(step) + " outside [0, " +
                        std::to_string(total_steps) + "]");
  return lr_min + 0.5 * (lr_max - lr_min) *
                      (1.0 + std::cos(std::numbers::pi * double(step) / double(total_steps)));
}

}  // namespace cxr::ad
