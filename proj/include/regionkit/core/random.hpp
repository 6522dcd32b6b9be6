#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

#include "regionkit/core/hash.hpp"

namespace regionkit {

// std::mt19937_64's output sequence is fixed by the standard; the
// distributions are not, so bounded draws are done here by rejection.
using Rng = std::mt19937_64;

inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  if (bound == 0) return 0;
  // Draws below `threshold` would bias the modulo; 2^64 - threshold is a
  // multiple of bound.
  const std::uint64_t threshold = (Rng::max() - bound + 1) % bound;
  for (;;) {
    std::uint64_t x = rng();
    if (x >= threshold) return x % bound;
  }
}

/// k distinct indices from [0, n), returned in ascending order.
inline std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k && i < n; ++i) {
    std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(std::min(k, n));
  std::sort(pool.begin(), pool.end());
  return pool;
}

template <typename T>
void shuffle_in_place(Rng& rng, std::vector<T>& v) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

/// Seed for a sub-stream keyed by a string (e.g. per-image sampling).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) {
  return hash64(std::to_string(seed) + "\x1f" + std::string(key));
}

}  // namespace regionkit
