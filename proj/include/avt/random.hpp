#pragma once
// Deterministic, serializable RNG (xoshiro256** seeded via splitmix64).
// Used everywhere instead of <random> distributions so that streams are
// bit-reproducible across standard libraries and restorable from
// checkpoints.

#include <array>
#include <cstdint>
#include <string>

namespace avt {

std::uint64_t splitmix64(std::uint64_t& state);

// Derives an independent seed for a named/numbered substream.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // uniform in [0, 1) with 53 random bits
  double uniform();
  // uniform in [lo, hi)
  double uniform(double lo, double hi);
  // standard normal via Box-Muller (explicit formula, no cached spare)
  double normal();
  // uniform integer in [0, n)
  std::uint64_t uniform_int(std::uint64_t n);

  // Fisher-Yates shuffle of indices 0..n-1
  template <typename T>
  void shuffle(T* v, std::size_t n) {
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      T tmp = v[i - 1];
      v[i - 1] = v[j];
      v[j] = tmp;
    }
  }

  std::string state_hex() const;
  static Rng from_state_hex(const std::string& hex);

 private:
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace avt
