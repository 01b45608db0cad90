#pragma once

#include <cmath>
#include <cstdint>

namespace compass {

// Stream ids, one per consumer. A consumer that stops drawing (e.g. an
// ablated module) leaves every other stream untouched.
namespace rng_stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kDropout = 2;
inline constexpr std::uint64_t kSampling = 3;
inline constexpr std::uint64_t kShuffle = 4;
inline constexpr std::uint64_t kCorpus = 5;
inline constexpr std::uint64_t kPromptDropout = 6;
inline constexpr std::uint64_t kLoraDropout = 7;
}  // namespace rng_stream

// Counter-based generator: output i is a pure function of (seed, stream, i),
// so replaying a stream is bitwise reproducible and streams never interact.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream)
      : key_(finalize(finalize(seed + 0x9e3779b97f4a7c15ull) ^
                      finalize(stream * 0xbf58476d1ce4e5b9ull + 0x94d049bb133111ebull))) {}

  std::uint64_t next_u64() {
    ++counter_;
    return finalize(key_ + counter_ * 0x9e3779b97f4a7c15ull);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Box-Muller, one deviate per call; two uniforms consumed.
  double normal(double mean = 0.0, double sd = 1.0) {
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sd * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Derived independent stream; the parent's counter is not consumed.
  Rng fork(std::uint64_t substream) const {
    Rng child(0, 0);
    child.key_ = finalize(key_ ^ finalize(substream + 0xd1b54a32d192ed03ull));
    return child;
  }

 private:
  static std::uint64_t finalize(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace compass
