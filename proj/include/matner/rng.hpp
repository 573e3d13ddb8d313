#pragma once
// Counter-based splitmix64 generator. The full state is (seed, draw counter),
// so every sequence of draws is reproducible bit-for-bit across runs and
// platforms, and independent substreams can be forked from a parent seed.

#include <cstdint>
#include <stdexcept>

namespace matner {

namespace detail {
inline uint64_t splitmix64_mix(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {}

  uint64_t seed() const { return seed_; }
  uint64_t position() const { return pos_; }

  uint64_t next_u64() {
    return detail::splitmix64_mix(seed_ + (++pos_) * 0x9e3779b97f4a7c15ull);
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool bernoulli(double p) { return next_double() < p; }

  // Unbiased integer in [0, n) (Lemire's multiply-shift with rejection).
  uint64_t below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto lo = static_cast<uint64_t>(m);
    if (lo < n) {
      const uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  // Fisher-Yates; depends only on this stream, never on std::shuffle's
  // implementation-defined draws.
  template <typename V>
  void shuffle(V& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream identified by a tag. Forking does not consume
  // draws from the parent.
  Rng substream(uint64_t tag) const {
    return Rng(detail::splitmix64_mix(seed_ ^ (0xd1b54a32d192ed03ull * (tag + 1))));
  }

 private:
  uint64_t seed_;
  uint64_t pos_ = 0;
};

}  // namespace matner
