#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "tabemb/util.hpp"

namespace tabemb {

// Deterministic RNG wrapper. std::mt19937_64 output is pinned by the
// standard, but the standard distributions are not, so every mapping from
// raw bits to a value lives here and nowhere else. Same seed, same stream
// of values, on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  // Derives an independent stream from (seed, stream tag, index).
  static Rng keyed(uint64_t seed, std::string_view stream, uint64_t index = 0) {
    uint64_t h = fnv1a64(stream, hash_mix(kFnvOffset, seed));
    return Rng(hash_mix(h, index));
  }

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 bits of randomness.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    uint64_t x, r;
    do {
      x = gen_();
      r = x % n;
    } while (x - r > ~uint64_t{0} - (n - 1));
    return r;
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo + 1)));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<size_t>(below(v.size()))];
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace tabemb
