#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace annobias {

// 64-bit FNV-1a, used to derive independent named streams from one seed.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic random source. The generator (std::mt19937_64) is fully
// specified by the C++ standard, and shuffling / bounded draws are done by
// hand because std::shuffle and std::uniform_int_distribution are
// implementation-defined. Equal seeds therefore give equal decision
// sequences on every platform and standard library.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : gen_(seed) {}

  // Independent stream for one named operation under a shared seed.
  static SeededRng stream(std::uint64_t seed, std::string_view name) {
    return SeededRng(splitmix64(seed ^ fnv1a64(name)));
  }

  std::uint64_t next() { return gen_(); }

  // Unbiased draw from [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t max64 = ~std::uint64_t{0};
    const std::uint64_t overhang = (max64 % bound + 1) % bound;  // 2^64 mod bound
    std::uint64_t r = next();
    if (overhang != 0) {
      while (r > max64 - overhang) r = next();
    }
    return r % bound;
  }

  // Uniform in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Uniform sample of k elements without replacement (shuffled order).
  template <typename T>
  std::vector<T> take(std::vector<T> v, std::size_t k) {
    shuffle(v);
    if (k < v.size()) v.resize(k);
    return v;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace annobias
