#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

namespace dpdl {

// Seeded random source. The engine is std::mt19937_64, whose output sequence
// is fixed by the standard; the distributions are implemented here instead of
// using <random>'s, which are implementation-defined. Together this makes every
// stream reproducible from (seed, call sequence) on any conforming toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. Draws two uniforms per call and keeps no
  // cached second value, so the engine state alone describes the stream.
  double normal();

  // Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);

  std::string state() const;
  void set_state(const std::string& text);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

// Deterministic seed derivation for sub-streams (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace dpdl
