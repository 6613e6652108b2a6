#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <string_view>

namespace vpd {

inline constexpr double kEulerGamma = 0.57721566490153286;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t seed_mix(std::uint64_t seed, std::uint64_t v) {
  return splitmix64(seed ^ (v + 0x9e3779b97f4a7c15ull + (seed << 6) + (seed >> 2)));
}

inline std::uint64_t seed_mix(std::uint64_t seed, std::string_view tag) {
  // FNV-1a over the tag, folded into the running seed
  std::uint64_t h = 1469598103934665603ull;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return seed_mix(seed, h);
}

template <typename First, typename... Rest>
  requires(sizeof...(Rest) > 0)
std::uint64_t seed_mix(std::uint64_t seed, First first, Rest... rest) {
  return seed_mix(seed_mix(seed, first), rest...);
}

// Seeded generator with named substreams.  Every parallel or restartable unit
// of work gets its own derived stream so results do not depend on evaluation
// order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : base_(seed), gen_(splitmix64(seed)) {}

  double uniform() { return unit_(gen_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(gen_); }
  double normal() { return normal_(gen_); }

  // standard Gumbel shifted to zero mean
  double gumbel() {
    double u = unit_(gen_);
    while (u <= 0.0) u = unit_(gen_);
    return -kEulerGamma - std::log(-std::log(u));
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return std::uniform_int_distribution<int>(lo, hi)(gen_);
  }

  std::uint64_t raw() { return gen_(); }

  template <typename... Tags>
  Rng derive(Tags... tags) const {
    return Rng(seed_mix(base_, tags...));
  }

 private:
  std::uint64_t base_;
  std::mt19937_64 gen_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace vpd
