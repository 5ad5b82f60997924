#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace cgpnas {

// splitmix64 step; used to spread raw seeds and to derive independent
// sub-streams from (seed, a, b) tuples.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic random stream. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard, and every distribution on top of it is
// implemented here, so identical seeds give identical draws on every
// platform and standard library.
class RngStream {
 public:
  RngStream() : RngStream(0) {}

  explicit RngStream(std::uint64_t seed) {
    // mt19937_64 seeded with a single word has weak early output for
    // small seeds; run the seed through splitmix64 first.
    std::uint64_t s = seed;
    engine_.seed(splitmix64_next(s));
  }

  // Independent stream for a labelled sub-task, e.g. (run seed,
  // generation, offspring index). Streams with distinct labels never
  // share a seed in practice.
  static RngStream derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = seed;
    std::uint64_t mixed = splitmix64_next(s);
    s = mixed ^ (a * 0x9e3779b97f4a7c15ull);
    mixed = splitmix64_next(s);
    s = mixed ^ (b * 0xc2b2ae3d27d4eb4full);
    RngStream out(0);
    out.engine_.seed(splitmix64_next(s));
    return out;
  }

  std::uint64_t next_u64() { return engine_(); }

  // Unbiased integer in [0, n). Rejection sampling over the top bits;
  // expected iterations < 2 for any n.
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t draw;
    do {
      draw = engine_();
    } while (draw >= limit);
    return static_cast<std::size_t>(draw % n);
  }

  // Uniform double in [0, 1), 53-bit resolution.
  double uniform_real() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform_real() < p; }

  // Standard normal via Box-Muller. The second variate of the pair is
  // discarded so the stream state stays a pure function of draw count.
  double normal() {
    double u1;
    do {
      u1 = uniform_real();
    } while (u1 <= 0.0);
    const double u2 = uniform_real();
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  std::string serialize() const;
  static RngStream deserialize(const std::string& text);

  bool operator==(const RngStream& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cgpnas
