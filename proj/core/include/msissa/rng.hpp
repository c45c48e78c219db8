#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace msissa {

/// Derives an independent stream seed from a master seed, a purpose label and
/// up to two indices. FNV-1a over the label, then SplitMix64 finalization over
/// each component in turn; stable across platforms and compilers.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                          std::uint64_t index = 0, std::uint64_t sub_index = 0);

/// Seeded random stream. All samplers in the library draw through this type so
/// that every result is a function of (seed, inputs).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t master, std::string_view label, std::uint64_t index = 0,
      std::uint64_t sub_index = 0)
      : engine_(derive_seed(master, label, index, sub_index)) {}

  /// Uniform on [0, 1).
  double uniform() { return unit_(engine_); }
  /// Uniform on (0, 1]; safe to take the log of.
  double uniform_pos() { return 1.0 - unit_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(engine_); }
  double normal() { return normal_(engine_); }
  std::uint64_t next_u64() { return engine_(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace msissa
