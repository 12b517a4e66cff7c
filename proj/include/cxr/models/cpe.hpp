#pragma once

#include <cmath>
#include <vector>

#include "cxr/common/error.hpp"
#include "cxr/common/rng.hpp"

namespace cxr::models {

inline constexpr double kSequenceCutoffHours = 360.0;

// Continuous positional embedding of t hours before the final scan:
// e[2i] = sin(t / 10000^(2i/d)), e[2i+1] = cos(t / 10000^(2i/d)).
inline std::vector<double> cpe_embed(double t, std::size_t d) {
  if (d == 0 || d % 2 != 0) throw ContractError("cpe_embed: dimension must be even and positive");
  if (!(t >= 0.0 && t < kSequenceCutoffHours))
    throw ContractError("cpe_embed: time " + std::to_string(t) + " h outside [0, 360)");
  std::vector<double> e(d);
  for (std::size_t i = 0; i < d / 2; ++i) {
    const double angle = t / std::pow(10000.0, double(2 * i) / double(d));
    e[2 * i] = std::sin(angle);
    e[2 * i + 1] = std::cos(angle);
  }
  return e;
}

// DropImage keep-mask: positions 0..n-2 are dropped independently with
// probability p_drop; the final position is always kept.
inline std::vector<bool> drop_image_mask(std::size_t n, double p_drop, Rng& rng) {
  if (n == 0) throw ContractError("drop_image_mask: empty sequence");
  if (!(p_drop >= 0.0 && p_drop < 1.0)) throw ContractError("drop_image_mask: p_drop must lie in [0,1)");
  std::vector<bool> keep(n, true);
  for (std::size_t i = 0; i + 1 < n; ++i) keep[i] = !bernoulli(rng, p_drop);
  return keep;
}

}  // namespace cxr::models
