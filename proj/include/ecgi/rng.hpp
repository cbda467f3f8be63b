#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace ecgi {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// Deterministic generator with explicit substream derivation. Child streams
// are derived from the parent's seed (not its consumed state), so a set of
// children is identical whether they are drawn serially or in parallel.
//
// Uniform and normal variates are generated in-house (xoshiro-free splitmix
// core + Box-Muller) so results do not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(detail::splitmix64(seed ^ 0x671c38e0f4bada2dULL)) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return lo + static_cast<int>(x % span);
  }

  // Derives an independent child stream from this generator's seed and the
  // given stream labels. Does not consume state.
  Rng child(std::initializer_list<std::uint64_t> stream) const {
    std::uint64_t h = detail::splitmix64(seed_);
    for (std::uint64_t w : stream) h = detail::splitmix64(h ^ w);
    return Rng(h);
  }

  Rng child(std::uint64_t a) const { return child({a}); }
  Rng child(std::uint64_t a, std::uint64_t b) const { return child({a, b}); }
  Rng child(std::uint64_t a, std::uint64_t b, std::uint64_t c) const { return child({a, b, c}); }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ecgi
