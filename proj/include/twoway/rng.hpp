#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>

namespace twoway {

// Splittable counter-based generator (splitmix64 core). All randomness in the
// library flows through explicit Rng values so runs are reproducible and
// concurrent consumers can use independently split streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Unbiased (Lemire multiply-shift with rejection).
  int next_below(int n) {
    if (n <= 0) throw std::invalid_argument("Rng::next_below: n must be positive");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    __uint128_t m = static_cast<__uint128_t>(next_u64()) * bound;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < bound) {
      const std::uint64_t t = (0 - bound) % bound;
      while (lo < t) {
        m = static_cast<__uint128_t>(next_u64()) * bound;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<int>(m >> 64);
  }

  // Independent child stream.
  Rng split() { return Rng(next_u64() ^ 0x6a09e667f3bcc909ULL); }

 private:
  std::uint64_t state_;
};

// Stateless mix of several words into one seed, for content-addressed
// generators (codebooks indexed by position rather than draw order).
inline std::uint64_t hash_words(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t w : words) {
    h ^= w + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    std::uint64_t z = h;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    h = z ^ (z >> 31);
  }
  return h;
}

// Draws an index distributed per `prob` (need not be exactly normalized;
// the last positive entry absorbs rounding slack).
inline int sample_categorical(std::span<const double> prob, Rng& rng) {
  double u = rng.next_unit();
  double acc = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    if (prob[i] > 0.0) last_positive = static_cast<int>(i);
    acc += prob[i];
    if (u < acc) return static_cast<int>(i);
  }
  if (last_positive < 0) throw std::invalid_argument("sample_categorical: all-zero distribution");
  return last_positive;
}

}  // namespace twoway
