#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace mi {

// mt19937_64 core (bit-exact per the standard) with explicit float mappings,
// so streams are reproducible across platforms and stdlib versions.
// std::normal_distribution is implementation-defined; Box-Muller is not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the second member of each pair is cached.
  double normal();

  // Bernoulli(p_true).
  bool bernoulli(double p_true) { return uniform() < p_true; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream derivation: mixes a master seed with stream indices so independent
// jobs (subjects, epochs, trials) get decorrelated, order-free seeds.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b);

// FNV-1a over a byte string; used for config hashing and subject-id seeding.
std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64(const std::string& s);

}  // namespace mi
