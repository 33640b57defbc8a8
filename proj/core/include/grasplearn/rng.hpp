#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace grasp {

// Deterministic random stream. Wraps std::mt19937_64 but generates all
// variates from raw 64-bit draws so sequences are identical across standard
// library implementations (std::uniform_*_distribution makes no such
// guarantee).
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive, unbiased via rejection.
  int64_t uniform_int(int64_t lo, int64_t hi);

  // Index in [0, n).
  size_t index(size_t n) { return static_cast<size_t>(uniform_int(0, static_cast<int64_t>(n) - 1)); }

  bool coin() { return (gen_() & 1u) != 0; }

  std::string serialize() const;
  void deserialize(const std::string& state);

 private:
  std::mt19937_64 gen_;
};

// Stable seed derivation: mixes a master seed with a purpose tag and index so
// independent streams never alias.
uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t index = 0);

}  // namespace grasp
