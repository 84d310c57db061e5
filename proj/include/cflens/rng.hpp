#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace cflens {

// Counter-based generator: every draw is a pure function of (key, counter),
// so streams can be split by hashing a parent key with a child tag.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key) : key_(key) {}

  static constexpr std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  constexpr std::uint64_t key() const { return key_; }

  constexpr CounterRng split(std::uint64_t tag) const {
    return CounterRng(mix(key_ ^ mix(tag + 0x632be59bd9b4e019ULL)));
  }

  constexpr std::uint64_t bits(std::uint64_t counter) const {
    return mix(mix(key_) ^ (counter * 0xd1b54a32d192ed03ULL + 1));
  }

  // Uniform in the open interval (0, 1).
  double uniform(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller on the counter pair (2c, 2c+1).
  double normal(std::uint64_t counter) const {
    const double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
};

// Stream tags for the distinct randomness consumers.
namespace stream {
inline constexpr std::uint64_t kLatents = 1;
inline constexpr std::uint64_t kInit = 2;
inline constexpr std::uint64_t kPlanes = 3;
inline constexpr std::uint64_t kTrain = 4;
inline constexpr std::uint64_t kValidation = 5;
inline constexpr std::uint64_t kShuffle = 6;
inline constexpr std::uint64_t kConditions = 7;
inline constexpr std::uint64_t kPopulation = 8;
}  // namespace stream

}  // namespace cflens
