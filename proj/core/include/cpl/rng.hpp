#pragma once

#include <cstdint>

namespace cpl::rng {

// Every random draw in the library is a pure function of (seed, stream,
// counter). There is no mutable generator state, so results do not depend
// on evaluation order or thread count, and any single draw can be
// reproduced in isolation. Streams partition the draws by role; counters
// index draws within a stream (one per example, or a documented multiple).
enum class Stream : std::uint64_t {
  kSplit = 1,        // dataset shuffling for calibration/validation splits
  kCalibration = 2,  // per-example u when scoring a calibration set
  kTest = 3,         // per-example u when predicting on a test set
  kTuning = 4,       // per-example u during hyperparameter tuning
  kSynthValue = 5,   // probability-vector jitter in the synthetic generator
  kSynthPerm = 6,    // rank-to-class permutations in the synthetic generator
  kSynthRank = 7,    // true-label rank draws in the synthetic generator
};

// Finalizer with full avalanche; the core of the counter hash.
std::uint64_t mix64(std::uint64_t x);

// Uniform 64-bit hash of the (seed, stream, counter) triple.
std::uint64_t hash_counter(std::uint64_t seed, Stream stream,
                           std::uint64_t counter);

// A keyed view over one (seed, stream) pair. Copyable, immutable, and safe
// to share across threads; all methods are const.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, Stream stream);

  // Raw 64 uniform bits for one counter.
  std::uint64_t bits(std::uint64_t counter) const;

  // Uniform double in [0, 1), using the top 53 bits.
  double unit(std::uint64_t counter) const;

  // Uniform double in (0, 1]; used where a subsequent log() must not see 0.
  double unit_open(std::uint64_t counter) const;

  // Uniform integer in [0, bound) without modulo bias. bound must be > 0.
  std::uint64_t below(std::uint64_t counter, std::uint64_t bound) const;

  // Standard normal via Box-Muller. Consumes counters 2*counter and
  // 2*counter + 1, so callers indexing draws 0..m-1 get independent values.
  double normal(std::uint64_t counter) const;

 private:
  std::uint64_t key_;
};

}  // namespace cpl::rng
