#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <type_traits>
#include <vector>

#include "cxr/autodiff/ops.hpp"

namespace cxr::ad {

// Mean binary cross-entropy over unmasked entries, evaluated as
// max(z,0) - z*t + log1p(exp(-|z|)) so large |z| never overflows.
// A mask entry of 0 removes that position from both the sum and the count.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets,
                          const std::optional<std::type_identity_t<Tensor<T>>>& mask = std::nullopt) {
  detail::require_same_shape(logits, targets, "bce_with_logits");
  if (mask) detail::require_same_shape(logits, *mask, "bce_with_logits mask");
  const std::size_t n = logits.numel();
  std::vector<T> weight(n, T(1));
  if (mask)
    for (std::size_t i = 0; i < n; ++i) weight[i] = (*mask)[i] != T(0) ? T(1) : T(0);
  T active = T(0);
  for (T w : weight) active += w;
  if (active == T(0)) throw InvalidInputError("bce_with_logits: every entry is masked");

  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (weight[i] == T(0)) continue;
    const T z = logits[i], t = targets[i];
    total += std::max(z, T(0)) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  const T loss = total / active;
  if (!std::isfinite(loss)) throw NumericError("bce_with_logits: non-finite loss");
  return detail::make_result<T>(
      {}, {loss}, {&logits},
      [weight = std::move(weight), active, tgt = std::vector<T>(targets.data().begin(), targets.data().end())](
          detail::Node<T>& self) {
        auto g = detail::parent_grad(self, 0);
        const auto& z = self.parents[0]->data;
        const T s = self.grad[0] / active;
        for (std::size_t i = 0; i < g.size(); ++i)
          if (weight[i] != T(0)) g[i] += s * (stable_sigmoid(z[i]) - tgt[i]);
      });
}

// Mean softmax cross-entropy of logits [B,C] against class indices.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& target) {
  detail::require_2d(logits, "cross_entropy");
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  detail::require(target.size() == b, "cross_entropy: one target per row");
  if (b == 0) throw InvalidInputError("cross_entropy: empty batch");
  std::vector<T> prob(b * c);
  T total = T(0);
  for (std::size_t i = 0; i < b; ++i) {
    if (target[i] >= c) throw ContractError("cross_entropy: target class out of range");
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, logits[i * c + j]);
    T s = T(0);
    for (std::size_t j = 0; j < c; ++j) s += prob[i * c + j] = std::exp(logits[i * c + j] - mx);
    for (std::size_t j = 0; j < c; ++j) prob[i * c + j] /= s;
    total += mx + std::log(s) - logits[i * c + target[i]];
  }
  const T loss = total / T(b);
  if (!std::isfinite(loss)) throw NumericError("cross_entropy: non-finite loss");
  return detail::make_result<T>({}, {loss}, {&logits},
                                [b, c, target, prob = std::move(prob)](detail::Node<T>& self) {
                                  auto g = detail::parent_grad(self, 0);
                                  const T s = self.grad[0] / T(b);
                                  for (std::size_t i = 0; i < b; ++i)
                                    for (std::size_t j = 0; j < c; ++j)
                                      g[i * c + j] += s * (prob[i * c + j] - (j == target[i] ? T(1) : T(0)));
                                });
}

}  // namespace cxr::ad
