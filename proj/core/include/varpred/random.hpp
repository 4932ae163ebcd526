#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace varpred {

using Seed = std::uint64_t;

// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Seed of a named sub-stream. Experiments own one seed and split it per
// purpose ("sampling", "init", "metric", ...) so that touching one purpose
// never perturbs another. `index` distinguishes steps or trials.
constexpr Seed derive_seed(Seed seed, std::string_view purpose, std::uint64_t index = 0) {
  return mix64(mix64(seed ^ hash_name(purpose)) + mix64(index + 0x632be59bd9b4e019ULL));
}

// Random stream with distributions written out explicitly, so that draws are
// bitwise reproducible across standard library implementations.
class Rng {
 public:
  explicit Rng(Seed seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one value per call.
  double normal();

  // Uniform integer in [0, n) by rejection, no modulo bias.
  std::uint64_t index(std::uint64_t n);

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[index(i)]);
    }
  }

  std::vector<int> permutation(int n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace varpred
