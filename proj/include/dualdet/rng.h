#ifndef DUALDET_RNG_H_
#define DUALDET_RNG_H_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace dualdet {

// SplitMix64 finalizer; used to derive independent stream seeds.
inline uint64_t MixSeed(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t DeriveSeed(uint64_t seed, uint64_t a, uint64_t b = 0) {
  return MixSeed(MixSeed(MixSeed(seed) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

inline uint64_t HashString(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// The std distributions are implementation-defined, so sampling is done by
// hand on top of mt19937_64 to keep generated data identical across
// standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t NextU64() { return engine_(); }

  // Uniform in [0, 1).
  double Uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Uniform integer in [lo, hi].
  int UniformInt(int lo, int hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(engine_() % span);
  }

  bool Bernoulli(double p) { return Uniform() < p; }

  double Normal(double mean, double stddev) {
    double u1 = Uniform();
    while (u1 <= 0.0) u1 = Uniform();
    const double u2 = Uniform();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) *
                      std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dualdet

#endif  // DUALDET_RNG_H_
