#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace augflow {

/// Seeded generator whose outputs are identical across standard libraries.
///
/// std::mt19937_64 is fully specified by the standard, but the std::*
/// distributions are not, so the few derived draws we need are written here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t index(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

/// Derive an independent stream seed from a base seed and a label.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Sorted indices of a uniform sample without replacement of size min(n, size).
std::vector<std::size_t> sample_indices(std::size_t size, std::size_t n, std::uint64_t seed);

}  // namespace augflow
