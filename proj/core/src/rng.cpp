#include "cpl/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cpl::rng {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kStreamSalt = 0xD1B54A32D192ED03ull;
constexpr std::uint64_t kCounterSalt = 0x2545F4914F6CDD1Dull;

}  // namespace

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

std::uint64_t hash_counter(std::uint64_t seed, Stream stream,
                           std::uint64_t counter) {
  std::uint64_t key = mix64(seed + kGolden);
  key = mix64(key ^ ((static_cast<std::uint64_t>(stream) + 1) * kStreamSalt));
  return mix64(key ^ ((counter + 1) * kCounterSalt));
}

CounterRng::CounterRng(std::uint64_t seed, Stream stream) {
  key_ = mix64(seed + kGolden);
  key_ = mix64(key_ ^ ((static_cast<std::uint64_t>(stream) + 1) * kStreamSalt));
}

std::uint64_t CounterRng::bits(std::uint64_t counter) const {
  return mix64(key_ ^ ((counter + 1) * kCounterSalt));
}

double CounterRng::unit(std::uint64_t counter) const {
  // 53-bit mantissa; exact multiples of 2^-53 in [0, 1).
  return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
}

double CounterRng::unit_open(std::uint64_t counter) const {
  return static_cast<double>((bits(counter) >> 11) + 1) * 0x1.0p-53;
}

std::uint64_t CounterRng::below(std::uint64_t counter,
                                std::uint64_t bound) const {
  if (bound == 0) {
    throw std::invalid_argument("CounterRng::below: bound must be positive");
  }
  // Multiply-shift maps 64 uniform bits to [0, bound) with bias < 2^-64,
  // far below anything observable; no rejection loop needed.
  const auto wide = static_cast<unsigned __int128>(bits(counter)) * bound;
  return static_cast<std::uint64_t>(wide >> 64);
}

double CounterRng::normal(std::uint64_t counter) const {
  const double u1 = unit_open(2 * counter);      // (0, 1]: log(u1) is finite
  const double u2 = unit(2 * counter + 1);       // [0, 1)
  const double radius = std::sqrt(-2.0 * std::log(u1));
  return radius * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace cpl::rng
