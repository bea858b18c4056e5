#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace solarlab {

// splitmix64 finalizer, used to spread user seeds and derive substreams
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Seeded random stream. All sampling is explicit arithmetic on the raw
// mt19937_64 output so results do not depend on the standard library's
// distribution implementations (those are not pinned by the standard).
// Box-Muller keeps no cached spare: one normal costs two uniforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  uint64_t seed() const { return seed_; }

  uint64_t raw() { return gen_(); }

  // uniform in [0, 1), 53-bit resolution
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform in {0, ..., n-1}, n > 0
  int uniform_int(int n) {
    int v = static_cast<int>(uniform() * static_cast<double>(n));
    return v < n ? v : n - 1;
  }

  // standard normal via Box-Muller (cosine branch only)
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793 * u2);
  }

  double normal(double mean, double stddev) {
    return mean + stddev * normal();
  }

  // independent child stream; same (seed, tag) always gives the same child
  Rng substream(uint64_t tag) const {
    return Rng(splitmix64(seed_ ^ splitmix64(tag + 0x51ED2701ull)));
  }

  // Fisher-Yates, swaps fixed by this stream
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace solarlab
