#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace cxr {

using Rng = std::mt19937_64;

// Independent stream keyed by (seed, k0, k1, ...). Used wherever work may be
// reordered or parallelized, e.g. per-sample augmentation seeded by
// (global_seed, epoch, sample_index).
inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * keys.size());
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto k : keys) push(k);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline bool bernoulli(Rng& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::bernoulli_distribution(p)(rng);
}

}  // namespace cxr
