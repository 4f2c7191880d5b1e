#pragma once

#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace fairmetric::rng {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Named streams hanging off the root seed.
enum class Stream : std::uint64_t {
  split = 1,
  train_triplets = 2,
  test_triplets = 3,
  learner = 4,
};

// Counter-based derivation: (root, stream, index) -> independent subseed.
constexpr std::uint64_t derive_seed(std::uint64_t root, Stream stream, std::uint64_t index = 0) noexcept {
  return mix64(mix64(mix64(root) ^ static_cast<std::uint64_t>(stream)) ^ index);
}

using Engine = std::mt19937_64;

// Uniform integer in [0, n) by rejection sampling, so the result does not
// depend on the standard library's distribution implementation.
inline std::uint64_t uniform_index(Engine& eng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do {
    r = eng();
  } while (r >= limit);
  return r % n;
}

inline std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  Engine eng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(p[i - 1], p[uniform_index(eng, i)]);
  }
  return p;
}

// m distinct positions from [0, n), uniformly, via a partial Fisher-Yates.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t m, std::uint64_t seed) {
  if (m > n) m = n;
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  Engine eng(seed);
  for (std::size_t i = 0; i < m; ++i) {
    std::swap(p[i], p[i + uniform_index(eng, n - i)]);
  }
  p.resize(m);
  return p;
}

}  // namespace fairmetric::rng
