#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace cpt {

// Seed mixing (splitmix64). Used to derive independent per-stream seeds
// from a (base seed, index) pair so parallel generation is order-free.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return mix64(mix64(base) ^ mix64(index + 0x51ed2701ULL));
}

// mt19937_64 has a fully specified output sequence; the distributions in
// <random> do not. All sampling here is built from raw engine output so a
// given seed reproduces the same values everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t bits() { return eng_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; consumes two uniforms per call.
  double normal() {
    const double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
  }

  // Index into a (not necessarily normalized) non-negative weight vector.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

  std::string hex_id(std::size_t n_bits = 128) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(n_bits / 4);
    std::uint64_t word = 0;
    int avail = 0;
    for (std::size_t i = 0; i < n_bits / 4; ++i) {
      if (avail == 0) {
        word = eng_();
        avail = 16;
      }
      out.push_back(kDigits[word & 0xf]);
      word >>= 4;
      --avail;
    }
    return out;
  }

 private:
  std::mt19937_64 eng_;
};

// Fisher-Yates with explicit index draws (std::shuffle is
// implementation-defined even for a fixed engine).
template <typename T>
void deterministic_shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j =
        static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(items[i - 1], items[j < i ? j : i - 1]);
  }
}

}  // namespace cpt
