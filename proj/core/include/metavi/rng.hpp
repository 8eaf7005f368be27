#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace metavi {

// Seeded RNG with named sub-streams so every stage of a run (data, init,
// training, eval) draws from its own independent stream. Uniforms are built
// directly from raw 64-bit output; nothing here depends on
// implementation-defined distribution adaptors, so streams are reproducible
// across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Derives a child stream from (master seed, stream name, index).
  static Rng substream(std::uint64_t master, std::string_view name,
                       std::uint64_t index = 0);

  // The seed such a child stream is built from, for APIs that take seeds.
  static std::uint64_t derive(std::uint64_t master, std::string_view name,
                              std::uint64_t index = 0);

  std::uint64_t next() { return gen_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Standard normal via Box-Muller; each draw consumes two uniforms.
  double normal();

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 gen_;
};

}  // namespace metavi
