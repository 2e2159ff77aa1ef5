#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace capfuse {

/// Deterministic random stream. All float conversions are done by hand so the
/// produced sequences depend only on the seed, not on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), n >= 1.
  int uniform_int(int n) { return static_cast<int>(uniform() * n); }

  /// Standard normal via Box-Muller with a cached spare.
  double gaussian();

  /// Derives a substream seed from a base seed and a tag (splitmix-style).
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t tag);
  static std::uint64_t mix(std::uint64_t seed, std::string_view tag);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace capfuse
