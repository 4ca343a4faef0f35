#pragma once

#include <cstdint>
#include <random>

namespace boostlab {

/// Purpose tags that separate random streams drawn under the same seed.
enum class Stream : std::uint32_t {
  kSplit = 1,
  kSubsample = 2,
  kColumns = 3,
  kDart = 4,
  kDpit = 5,
  kBootstrap = 6,
};

/// Uniform generator whose output depends only on (seed, purpose, key), never
/// on how many draws happened elsewhere. Built on std::mt19937_64 seeded
/// through std::seed_seq, both of which are fully specified by the standard.
class KeyedRng {
 public:
  KeyedRng(std::uint64_t seed, Stream purpose, std::uint64_t key = 0);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

 private:
  std::mt19937_64 engine_;
};

}  // namespace boostlab
