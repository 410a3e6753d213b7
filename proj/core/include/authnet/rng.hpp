#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace authnet::rng {

// std::shuffle and the standard distributions are implementation-defined,
// so every draw that must reproduce bit-identically across platforms goes
// through this generator instead.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();

  /// Unbiased draw in [0, bound) via rejection sampling. bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform double in [0, 1) using the top 53 bits.
  double unit();

  /// Standard normal via Box-Muller. Not cross-platform bit-stable (libm),
  /// only used where per-platform determinism suffices (weight init, jitter).
  double normal();

  /// Fisher-Yates with draws from this generator.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    if (values.size() < 2) return;
    for (std::size_t i = values.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(below(i + 1));
      using std::swap;
      swap(values[i], values[j]);
    }
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// FNV-1a over the bytes of a string.
std::uint64_t hash64(std::string_view text);

/// Combines two seeds into one derived stream seed.
std::uint64_t mix(std::uint64_t a, std::uint64_t b);

}  // namespace authnet::rng
