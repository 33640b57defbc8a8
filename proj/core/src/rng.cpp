#include "grasplearn/rng.hpp"

#include <sstream>

#include "grasplearn/errors.hpp"

namespace grasp {

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  if (hi < lo) throw StateError("Rng::uniform_int: empty range");
  uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<int64_t>(gen_());  // full 64-bit range
  uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t x;
  do {
    x = gen_();
  } while (x >= limit);
  return lo + static_cast<int64_t>(x % span);
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << gen_;
  return os.str();
}

void Rng::deserialize(const std::string& state) {
  std::istringstream is(state);
  is >> gen_;
  if (is.fail()) throw StateError("Rng::deserialize: malformed stream state");
}

uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t index) {
  // splitmix64 over master, tag bytes (FNV-mixed), and index.
  uint64_t h = master ^ 0x9e3779b97f4a7c15ull;
  for (char c : tag) {
    h ^= static_cast<uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001b3ull;
  }
  h ^= index + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  // splitmix64 finalizer
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebull;
  h ^= h >> 31;
  return h;
}

}  // namespace grasp
