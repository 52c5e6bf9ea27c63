#pragma once

#include <cstdint>
#include <random>

namespace phaseless {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Per-item seed derived as seed XOR item id, then mixed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t item) {
  return splitmix64(seed ^ item);
}

// mt19937_64 with a portable uniform mapping (the std distributions are
// implementation-defined, which would break byte-identical outputs across
// standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace phaseless
